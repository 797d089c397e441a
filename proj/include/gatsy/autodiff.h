#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gatsy/tensor.h"

namespace gatsy::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using Gradients = std::map<std::string, Tensor>;

/// Ordered record of primitive ops. Replaying it backward from a scalar loss
/// yields one gradient per tracked parameter; parameters the loss never
/// touched get zero tensors.
class Tape {
 public:
  /// Receives the gradient flowing into the op's output.
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(std::string name, Tensor value);

  /// Appends an op result. `backward` is dropped when no input needs a gradient.
  /// Throws NumericError if `value` is not finite.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }

  /// Adds `g` into the gradient buffer of `v` (no-op for constants).
  void accumulate(const Var& v, const Tensor& g);
  /// Mutable gradient buffer for in-place accumulation, zero-initialized on first use.
  Tensor& grad_buffer(const Var& v);

  /// Runs reverse-mode differentiation from a scalar `loss`.
  Gradients backward(const Var& loss);

  /// Gradient accumulated into `v` by the last backward(); zeros if untouched.
  Tensor grad(const Var& v) const;

  std::size_t num_ops() const { return nodes_.size(); }
  std::vector<std::string> op_log() const;

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    BackwardFn backward;
    std::string parameter_name;
  };

  void check_owner(const Var& v) const;

  std::deque<Node> nodes_;
  std::vector<std::size_t> parameters_;
};

/// Free-function form of Tape::backward.
Gradients backward(Tape& tape, const Var& loss);

/// Offsets of a partition of [0, E) into consecutive segments: segment s is
/// [offsets[s], offsets[s+1]).
using SegmentOffsets = std::span<const std::size_t>;

struct BatchNormStats {
  Tensor running_mean;  // 1 x F
  Tensor running_var;   // 1 x F
};

enum class BatchNormMode { kTrain, kEval };

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// a + row broadcast over every row of a; `row` is 1 x cols(a).
Var add_row(const Var& a, const Var& row);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);

Var elu(const Var& x);
/// x if x > 0 else slope * x; slope must lie in (0, 1).
Var leaky_relu(const Var& x, double slope);
Var relu(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);

Var gather_rows(const Var& x, std::span<const std::size_t> index);
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
Var concat_cols(const Var& a, const Var& b);

/// Softmax of an E x 1 score column within each segment, with max-subtraction.
/// Throws std::invalid_argument on an empty segment or a non-partition.
Var segment_softmax(const Var& scores, SegmentOffsets offsets);

/// out[s] = sum over e in segment s of weights[e] * values[neighbors[e]].
Var segment_weighted_sum(const Var& weights, const Var& values,
                         std::span<const std::size_t> neighbors, SegmentOffsets offsets);

/// out[s] = mean over e in segment s of values[neighbors[e]].
Var segment_mean(const Var& values, std::span<const std::size_t> neighbors,
                 SegmentOffsets offsets);

/// Per-feature normalization. Train mode uses batch statistics (needs at
/// least two rows) and updates `stats` with momentum; eval mode uses `stats`.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats,
               BatchNormMode mode, const BatchNormOptions& options = {});

/// Euclidean distance between matching rows of a and b, as an R x 1 column.
/// The subgradient at coincident rows is zero.
Var row_distance(const Var& a, const Var& b);

/// Euclidean distance between two equal-length tensors, as a scalar.
Var euclidean_distance(const Var& a, const Var& b);

/// Mean cross-entropy of row-wise softmax(logits) against integer labels.
Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> labels);

/// Row-wise softmax of plain values.
Tensor softmax_rows(const Tensor& logits);

/// Validates that `offsets` partitions [0, total) into non-empty segments.
void check_segments(SegmentOffsets offsets, std::size_t total, const char* op);

}  // namespace gatsy::ad
