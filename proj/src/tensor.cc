#include "gatsy/tensor.h"

#include <cmath>
#include <cstring>
#include <sstream>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define GATSY_HAVE_AVX2_FMA 1
#endif

namespace gatsy {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    std::ostringstream msg;
    msg << "tensor of shape [" << rows << "x" << cols << "] needs " << rows * cols
        << " values, got " << data_.size();
    throw DimensionError(msg.str());
  }
}

Tensor Tensor::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(n, 1, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << "[" << rows_ << "x" << cols_ << "]";
  return out.str();
}

double Tensor::item() const {
  if (!is_scalar()) throw DimensionError("item() on non-scalar tensor " + shape_string());
  return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_string(const Tensor& t) { return t.shape_string(); }

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + what + " " +
                       t.shape_string());
  }
}

namespace linalg {
namespace {

// Column tile width and row panel height of the register kernel.
constexpr std::size_t kTileCols = 12;
constexpr std::size_t kPanelRows = 4;

double dot_fma(const double* a, const double* b, std::size_t k, std::size_t b_stride) {
  double s = 0.0;
  for (std::size_t kk = 0; kk < k; ++kk) s = std::fma(a[kk], b[kk * b_stride], s);
  return s;
}

#ifdef GATSY_HAVE_AVX2_FMA
void tile_kernel(const double* a, std::size_t a_rows, std::size_t k, const double* packed,
                 double* out, std::size_t out_stride) {
  std::size_t i = 0;
  for (; i + kPanelRows <= a_rows; i += kPanelRows) {
    __m256d c00 = _mm256_setzero_pd(), c01 = c00, c02 = c00;
    __m256d c10 = c00, c11 = c00, c12 = c00;
    __m256d c20 = c00, c21 = c00, c22 = c00;
    __m256d c30 = c00, c31 = c00, c32 = c00;
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    const double* bp = packed;
    for (std::size_t kk = 0; kk < k; ++kk, bp += kTileCols) {
      const __m256d b0 = _mm256_loadu_pd(bp);
      const __m256d b1 = _mm256_loadu_pd(bp + 4);
      const __m256d b2 = _mm256_loadu_pd(bp + 8);
      __m256d x = _mm256_broadcast_sd(a0 + kk);
      c00 = _mm256_fmadd_pd(x, b0, c00);
      c01 = _mm256_fmadd_pd(x, b1, c01);
      c02 = _mm256_fmadd_pd(x, b2, c02);
      x = _mm256_broadcast_sd(a1 + kk);
      c10 = _mm256_fmadd_pd(x, b0, c10);
      c11 = _mm256_fmadd_pd(x, b1, c11);
      c12 = _mm256_fmadd_pd(x, b2, c12);
      x = _mm256_broadcast_sd(a2 + kk);
      c20 = _mm256_fmadd_pd(x, b0, c20);
      c21 = _mm256_fmadd_pd(x, b1, c21);
      c22 = _mm256_fmadd_pd(x, b2, c22);
      x = _mm256_broadcast_sd(a3 + kk);
      c30 = _mm256_fmadd_pd(x, b0, c30);
      c31 = _mm256_fmadd_pd(x, b1, c31);
      c32 = _mm256_fmadd_pd(x, b2, c32);
    }
    double* o = out + i * out_stride;
    _mm256_storeu_pd(o, c00);
    _mm256_storeu_pd(o + 4, c01);
    _mm256_storeu_pd(o + 8, c02);
    o += out_stride;
    _mm256_storeu_pd(o, c10);
    _mm256_storeu_pd(o + 4, c11);
    _mm256_storeu_pd(o + 8, c12);
    o += out_stride;
    _mm256_storeu_pd(o, c20);
    _mm256_storeu_pd(o + 4, c21);
    _mm256_storeu_pd(o + 8, c22);
    o += out_stride;
    _mm256_storeu_pd(o, c30);
    _mm256_storeu_pd(o + 4, c31);
    _mm256_storeu_pd(o + 8, c32);
  }
  for (; i < a_rows; ++i) {
    __m256d c0 = _mm256_setzero_pd(), c1 = c0, c2 = c0;
    const double* ai = a + i * k;
    const double* bp = packed;
    for (std::size_t kk = 0; kk < k; ++kk, bp += kTileCols) {
      const __m256d x = _mm256_broadcast_sd(ai + kk);
      c0 = _mm256_fmadd_pd(x, _mm256_loadu_pd(bp), c0);
      c1 = _mm256_fmadd_pd(x, _mm256_loadu_pd(bp + 4), c1);
      c2 = _mm256_fmadd_pd(x, _mm256_loadu_pd(bp + 8), c2);
    }
    double* o = out + i * out_stride;
    _mm256_storeu_pd(o, c0);
    _mm256_storeu_pd(o + 4, c1);
    _mm256_storeu_pd(o + 8, c2);
  }
}
#endif

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape_string() + " x " +
                         b.shape_string());
  }
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t p = b.cols();
  Tensor out(m, p);
  std::size_t j0 = 0;
#ifdef GATSY_HAVE_AVX2_FMA
  std::vector<double> packed(k * kTileCols);
  for (; j0 + kTileCols <= p; j0 += kTileCols) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      std::memcpy(&packed[kk * kTileCols], b.data() + kk * p + j0, kTileCols * sizeof(double));
    }
    tile_kernel(a.data(), m, k, packed.data(), out.data() + j0, p);
  }
#endif
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = j0; j < p; ++j) {
      out(i, j) = dot_fma(a.data() + i * k, b.data() + j, k, p);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  Tensor out(index.size(), a.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= a.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(index[r]) + " out of range for " +
                           a.shape_string());
    }
    std::memcpy(out.data() + r * a.cols(), a.data() + index[r] * a.cols(),
                a.cols() * sizeof(double));
  }
  return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("distance: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace linalg
}  // namespace gatsy
