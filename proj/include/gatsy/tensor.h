#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gatsy {

/// Raised when operand shapes are incompatible. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces NaN or Inf from finite inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Vectors are n x 1 columns and scalars
/// are 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor(1, 1, value); }
  static Tensor column(std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.rows_, other.cols_); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::string shape_string() const;
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Tensor& t);

/// Throws NumericError naming `what` when `t` holds a NaN or Inf.
void require_finite(const Tensor& t, const char* what);

namespace linalg {

/// out = a * b. Every output element is a single fused multiply-add chain
/// over the inner dimension in ascending order, so a row's result depends
/// only on that row of `a` and on `b`, never on how many rows `a` has.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

/// Rows of `a` selected by `index`, in order.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace linalg
}  // namespace gatsy
