#include "gatsy/autodiff.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gatsy::ad {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("value() on an unbound Var");
  return tape_->value(id_);
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(std::string name, Tensor value) {
  require_finite(value, "parameter");
  Node node;
  node.op = "parameter";
  node.value = std::move(value);
  node.needs_grad = true;
  node.parameter_name = std::move(name);
  nodes_.push_back(std::move(node));
  parameters_.push_back(nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  require_finite(value, op);
  Node node;
  node.op = op;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    check_owner(in);
    node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(const Var& v) const {
  if (v.tape() != this) throw std::logic_error("Var belongs to a different tape");
}

Tensor& Tape::grad_buffer(const Var& v) {
  Node& node = nodes_[v.id()];
  if (!node.has_grad) {
    node.grad = Tensor::zeros_like(node.value);
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  if (!nodes_[v.id()].needs_grad) return;
  Tensor& buf = grad_buffer(v);
  if (buf.rows() != g.rows() || buf.cols() != g.cols()) {
    throw DimensionError(std::string("gradient shape ") + g.shape_string() + " does not match " +
                         buf.shape_string() + " for op " + nodes_[v.id()].op);
  }
  double* dst = buf.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

Gradients Tape::backward(const Var& loss) {
  check_owner(loss);
  if (!loss.value().is_scalar()) {
    throw DimensionError("backward: loss must be scalar, got " + loss.value().shape_string());
  }
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor();
  }
  if (nodes_[loss.id()].needs_grad) {
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.has_grad || !node.backward) continue;
      // Copy so the callback may grow this node's buffer through aliases safely.
      const Tensor upstream = node.grad;
      require_finite(upstream, node.op);
      node.backward(*this, upstream);
    }
  }
  Gradients out;
  for (std::size_t id : parameters_) {
    const Node& node = nodes_[id];
    out[node.parameter_name] = node.has_grad ? node.grad : Tensor::zeros_like(node.value);
  }
  return out;
}

Tensor Tape::grad(const Var& v) const {
  check_owner(v);
  const Node& node = nodes_[v.id()];
  return node.has_grad ? node.grad : Tensor::zeros_like(node.value);
}

std::vector<std::string> Tape::op_log() const {
  std::vector<std::string> log;
  log.reserve(nodes_.size());
  for (const Node& node : nodes_) log.emplace_back(node.op);
  return log;
}

Gradients backward(Tape& tape, const Var& loss) { return tape.backward(loss); }

// ---------------------------------------------------------------------------
// Ops

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::logic_error("op on an unbound Var");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shapes differ, " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

template <typename F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

void check_segments(SegmentOffsets offsets, std::size_t total, const char* op) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != total) {
    throw std::invalid_argument(std::string(op) + ": segments do not partition " +
                                std::to_string(total) + " entries");
  }
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] < offsets[s]) {
      throw std::invalid_argument(std::string(op) + ": segment offsets decrease");
    }
    if (offsets[s + 1] == offsets[s]) {
      throw std::invalid_argument(std::string(op) + ": segment " + std::to_string(s) +
                                  " is empty");
    }
  }
}

Var matmul(const Var& a, const Var& b) {
  Tape& tape = tape_of(a);
  Tensor out = linalg::matmul(a.value(), b.value());
  return tape.record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a)) t.accumulate(a, linalg::matmul(g, linalg::transpose(b.value())));
    if (t.needs_grad(b)) t.accumulate(b, linalg::matmul(linalg::transpose(a.value()), g));
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape_of(a).record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_row(const Var& a, const Var& row) {
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw DimensionError("add_row: row " + r.shape_string() + " does not broadcast over " +
                         x.shape_string());
  }
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += r[j];
  }
  return tape_of(a).record("add_row", std::move(out), {a, row},
                           [a, row](Tape& t, const Tensor& g) {
                             t.accumulate(a, g);
                             if (!t.needs_grad(row)) return;
                             Tensor& gr = t.grad_buffer(row);
                             for (std::size_t i = 0; i < g.rows(); ++i) {
                               for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
                             }
                           });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return tape_of(a).record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (!t.needs_grad(b)) return;
    Tensor& gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape_of(a).record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = map_values(a.value(), [factor](double v) { return v * factor; });
  return tape_of(a).record("scale", std::move(out), {a}, [a, factor](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var add_scalar(const Var& a, double value) {
  Tensor out = map_values(a.value(), [value](double v) { return v + value; });
  return tape_of(a).record("add_scalar", std::move(out), {a},
                           [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

Var elu(const Var& x) {
  Tensor out = map_values(x.value(), [](double v) { return v > 0.0 ? v : std::expm1(v); });
  return tape_of(x).record("elu", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    const Tensor& v = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += v[i] > 0.0 ? g[i] : g[i] * std::exp(v[i]);
  });
}

Var leaky_relu(const Var& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw std::invalid_argument("leaky_relu: slope must lie in (0, 1), got " +
                                std::to_string(slope));
  }
  Tensor out = map_values(x.value(), [slope](double v) { return v > 0.0 ? v : slope * v; });
  return tape_of(x).record("leaky_relu", std::move(out), {x},
                           [x, slope](Tape& t, const Tensor& g) {
                             Tensor& gx = t.grad_buffer(x);
                             const Tensor& v = x.value();
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               gx[i] += v[i] > 0.0 ? g[i] : slope * g[i];
                             }
                           });
}

Var relu(const Var& x) {
  Tensor out = map_values(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return tape_of(x).record("relu", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    const Tensor& v = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (v[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return tape_of(x).record("sum", Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return tape_of(x).record("mean", Tensor::scalar(s / static_cast<double>(n)), {x},
                           [x, n](Tape& t, const Tensor& g) {
                             Tensor& gx = t.grad_buffer(x);
                             const double share = g[0] / static_cast<double>(n);
                             for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += share;
                           });
}

Var gather_rows(const Var& x, std::span<const std::size_t> index) {
  Tensor out = linalg::gather_rows(x.value(), index);
  std::vector<std::size_t> idx(index.begin(), index.end());
  return tape_of(x).record("gather_rows", std::move(out), {x},
                           [x, idx = std::move(idx)](Tape& t, const Tensor& g) {
                             Tensor& gx = t.grad_buffer(x);
                             const std::size_t c = g.cols();
                             for (std::size_t r = 0; r < idx.size(); ++r) {
                               double* dst = gx.data() + idx[r] * c;
                               const double* src = g.data() + r * c;
                               for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                             }
                           });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  const Tensor& v = x.value();
  if (begin + count > v.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + v.shape_string());
  }
  Tensor out(count, v.cols(),
             std::vector<double>(v.data() + begin * v.cols(),
                                 v.data() + (begin + count) * v.cols()));
  return tape_of(x).record("slice_rows", std::move(out), {x},
                           [x, begin](Tape& t, const Tensor& g) {
                             Tensor& gx = t.grad_buffer(x);
                             double* dst = gx.data() + begin * g.cols();
                             for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                           });
}

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rows() != y.rows()) {
    throw DimensionError("concat_cols: row counts differ, " + x.shape_string() + " vs " +
                         y.shape_string());
  }
  Tensor out(x.rows(), x.cols() + y.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::copy(x.row(i).begin(), x.row(i).end(), out.row(i).begin());
    std::copy(y.row(i).begin(), y.row(i).end(), out.row(i).begin() + x.cols());
  }
  const std::size_t split = x.cols();
  return tape_of(a).record("concat_cols", std::move(out), {a, b},
                           [a, b, split](Tape& t, const Tensor& g) {
                             const std::size_t right = g.cols() - split;
                             if (t.needs_grad(a)) {
                               Tensor& ga = t.grad_buffer(a);
                               for (std::size_t i = 0; i < g.rows(); ++i) {
                                 for (std::size_t j = 0; j < split; ++j) ga(i, j) += g(i, j);
                               }
                             }
                             if (t.needs_grad(b)) {
                               Tensor& gb = t.grad_buffer(b);
                               for (std::size_t i = 0; i < g.rows(); ++i) {
                                 for (std::size_t j = 0; j < right; ++j) {
                                   gb(i, j) += g(i, split + j);
                                 }
                               }
                             }
                           });
}

Var segment_softmax(const Var& scores, SegmentOffsets offsets) {
  const Tensor& s = scores.value();
  if (s.cols() != 1) throw DimensionError("segment_softmax: scores must be E x 1, got " +
                                          s.shape_string());
  check_segments(offsets, s.rows(), "segment_softmax");
  Tensor out(s.rows(), 1);
  for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
    const std::size_t lo = offsets[seg];
    const std::size_t hi = offsets[seg + 1];
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t e = lo; e < hi; ++e) peak = std::max(peak, s[e]);
    double total = 0.0;
    for (std::size_t e = lo; e < hi; ++e) {
      out[e] = std::exp(s[e] - peak);
      total += out[e];
    }
    for (std::size_t e = lo; e < hi; ++e) out[e] /= total;
  }
  std::vector<std::size_t> segs(offsets.begin(), offsets.end());
  Tensor probs = out;
  return tape_of(scores).record(
      "segment_softmax", std::move(out), {scores},
      [scores, segs = std::move(segs), probs = std::move(probs)](Tape& t, const Tensor& g) {
        Tensor& gs = t.grad_buffer(scores);
        for (std::size_t seg = 0; seg + 1 < segs.size(); ++seg) {
          double dot = 0.0;
          for (std::size_t e = segs[seg]; e < segs[seg + 1]; ++e) dot += g[e] * probs[e];
          for (std::size_t e = segs[seg]; e < segs[seg + 1]; ++e) {
            gs[e] += probs[e] * (g[e] - dot);
          }
        }
      });
}

Var segment_weighted_sum(const Var& weights, const Var& values,
                         std::span<const std::size_t> neighbors, SegmentOffsets offsets) {
  const Tensor& w = weights.value();
  const Tensor& v = values.value();
  if (w.cols() != 1 || w.rows() != neighbors.size()) {
    throw DimensionError("segment_weighted_sum: weights " + w.shape_string() + " vs " +
                         std::to_string(neighbors.size()) + " neighbor entries");
  }
  check_segments(offsets, neighbors.size(), "segment_weighted_sum");
  const std::size_t segments = offsets.size() - 1;
  const std::size_t c = v.cols();
  Tensor out(segments, c);
  for (std::size_t seg = 0; seg < segments; ++seg) {
    double* dst = out.data() + seg * c;
    for (std::size_t e = offsets[seg]; e < offsets[seg + 1]; ++e) {
      if (neighbors[e] >= v.rows()) {
        throw DimensionError("segment_weighted_sum: neighbor " + std::to_string(neighbors[e]) +
                             " outside " + v.shape_string());
      }
      const double* src = v.data() + neighbors[e] * c;
      const double we = w[e];
      for (std::size_t j = 0; j < c; ++j) dst[j] += we * src[j];
    }
  }
  std::vector<std::size_t> nbr(neighbors.begin(), neighbors.end());
  std::vector<std::size_t> segs(offsets.begin(), offsets.end());
  return tape_of(values).record(
      "segment_weighted_sum", std::move(out), {weights, values},
      [weights, values, nbr = std::move(nbr), segs = std::move(segs)](Tape& t, const Tensor& g) {
        const Tensor& w = weights.value();
        const Tensor& v = values.value();
        const std::size_t c = v.cols();
        const bool want_w = t.needs_grad(weights);
        const bool want_v = t.needs_grad(values);
        Tensor* gw = want_w ? &t.grad_buffer(weights) : nullptr;
        Tensor* gv = want_v ? &t.grad_buffer(values) : nullptr;
        for (std::size_t seg = 0; seg + 1 < segs.size(); ++seg) {
          const double* up = g.data() + seg * c;
          for (std::size_t e = segs[seg]; e < segs[seg + 1]; ++e) {
            const double* src = v.data() + nbr[e] * c;
            if (want_w) {
              double dot = 0.0;
              for (std::size_t j = 0; j < c; ++j) dot += up[j] * src[j];
              (*gw)[e] += dot;
            }
            if (want_v) {
              double* dst = gv->data() + nbr[e] * c;
              const double we = w[e];
              for (std::size_t j = 0; j < c; ++j) dst[j] += we * up[j];
            }
          }
        }
      });
}

Var segment_mean(const Var& values, std::span<const std::size_t> neighbors,
                 SegmentOffsets offsets) {
  check_segments(offsets, neighbors.size(), "segment_mean");
  std::vector<double> w(neighbors.size());
  for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
    const double share = 1.0 / static_cast<double>(offsets[seg + 1] - offsets[seg]);
    for (std::size_t e = offsets[seg]; e < offsets[seg + 1]; ++e) w[e] = share;
  }
  Var weights = tape_of(values).constant(Tensor::column(std::move(w)));
  return segment_weighted_sum(weights, values, neighbors, offsets);
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats,
               BatchNormMode mode, const BatchNormOptions& options) {
  const Tensor& v = x.value();
  const std::size_t b = v.rows();
  const std::size_t f = v.cols();
  if (gamma.value().rows() != 1 || gamma.value().cols() != f || beta.value().rows() != 1 ||
      beta.value().cols() != f) {
    throw DimensionError("batch_norm: affine parameters must be 1 x " + std::to_string(f));
  }
  if (stats.running_mean.cols() != f || stats.running_var.cols() != f) {
    throw DimensionError("batch_norm: running statistics do not match " + v.shape_string());
  }
  Tensor mu(1, f);
  Tensor inv_std(1, f);
  if (mode == BatchNormMode::kTrain) {
    if (b < 2) {
      throw std::invalid_argument("batch_norm: train mode needs at least 2 rows, got " +
                                  std::to_string(b));
    }
    Tensor var(1, f);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < f; ++j) mu[j] += v(i, j);
    }
    for (std::size_t j = 0; j < f; ++j) mu[j] /= static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const double d = v(i, j) - mu[j];
        var[j] += d * d;
      }
    }
    const double m = options.momentum;
    for (std::size_t j = 0; j < f; ++j) {
      const double biased = var[j] / static_cast<double>(b);
      const double unbiased = var[j] / static_cast<double>(b - 1);
      inv_std[j] = 1.0 / std::sqrt(biased + options.epsilon);
      stats.running_mean[j] = (1.0 - m) * stats.running_mean[j] + m * mu[j];
      stats.running_var[j] = (1.0 - m) * stats.running_var[j] + m * unbiased;
    }
  } else {
    for (std::size_t j = 0; j < f; ++j) {
      mu[j] = stats.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + options.epsilon);
    }
  }
  Tensor normalized(b, f);
  Tensor out(b, f);
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      normalized(i, j) = (v(i, j) - mu[j]) * inv_std[j];
      out(i, j) = gm[j] * normalized(i, j) + bt[j];
    }
  }
  const bool train = mode == BatchNormMode::kTrain;
  return tape_of(x).record(
      "batch_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, train, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Tape& t, const Tensor& g) {
        const std::size_t b = g.rows();
        const std::size_t f = g.cols();
        if (t.needs_grad(gamma) || t.needs_grad(beta)) {
          Tensor dgamma(1, f);
          Tensor dbeta(1, f);
          for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < f; ++j) {
              dgamma[j] += g(i, j) * normalized(i, j);
              dbeta[j] += g(i, j);
            }
          }
          t.accumulate(gamma, dgamma);
          t.accumulate(beta, dbeta);
        }
        if (!t.needs_grad(x)) return;
        Tensor& gx = t.grad_buffer(x);
        const Tensor& gm = gamma.value();
        if (!train) {
          for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < f; ++j) gx(i, j) += g(i, j) * gm[j] * inv_std[j];
          }
          return;
        }
        Tensor sum_dn(1, f);
        Tensor sum_dn_n(1, f);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            const double dn = g(i, j) * gm[j];
            sum_dn[j] += dn;
            sum_dn_n[j] += dn * normalized(i, j);
          }
        }
        const double inv_b = 1.0 / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            const double dn = g(i, j) * gm[j];
            gx(i, j) += inv_std[j] * inv_b *
                        (static_cast<double>(b) * dn - sum_dn[j] - normalized(i, j) * sum_dn_n[j]);
          }
        }
      });
}

Var row_distance(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "row_distance");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    out[i] = std::sqrt(linalg::squared_distance(x.row(i), y.row(i)));
  }
  Tensor dist = out;
  return tape_of(a).record(
      "row_distance", std::move(out), {a, b},
      [a, b, dist = std::move(dist)](Tape& t, const Tensor& g) {
        const Tensor& x = a.value();
        const Tensor& y = b.value();
        const std::size_t c = x.cols();
        Tensor dir(x.rows(), c);
        for (std::size_t i = 0; i < x.rows(); ++i) {
          if (dist[i] == 0.0) continue;
          const double s = g[i] / dist[i];
          for (std::size_t j = 0; j < c; ++j) dir(i, j) = s * (x(i, j) - y(i, j));
        }
        t.accumulate(a, dir);
        if (!t.needs_grad(b)) return;
        Tensor& gb = t.grad_buffer(b);
        for (std::size_t i = 0; i < dir.size(); ++i) gb[i] -= dir[i];
      });
}

Var euclidean_distance(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.size() != y.size()) {
    throw DimensionError("euclidean_distance: lengths differ, " + x.shape_string() + " vs " +
                         y.shape_string());
  }
  const double d = std::sqrt(linalg::squared_distance(x.values(), y.values()));
  return tape_of(a).record("euclidean_distance", Tensor::scalar(d), {a, b},
                           [a, b, d](Tape& t, const Tensor& g) {
                             if (d == 0.0) return;
                             const Tensor& x = a.value();
                             const Tensor& y = b.value();
                             const double s = g[0] / d;
                             if (t.needs_grad(a)) {
                               Tensor& ga = t.grad_buffer(a);
                               for (std::size_t i = 0; i < x.size(); ++i) ga[i] += s * (x[i] - y[i]);
                             }
                             if (t.needs_grad(b)) {
                               Tensor& gb = t.grad_buffer(b);
                               for (std::size_t i = 0; i < x.size(); ++i) gb[i] -= s * (x[i] - y[i]);
                             }
                           });
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      out(i, j) = std::exp(row[j] - peak);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < row.size(); ++j) out(i, j) /= total;
  }
  return out;
}

Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  if (labels.size() != z.rows() || z.rows() == 0) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + z.shape_string());
  }
  Tensor probs = softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (labels[i] >= z.cols()) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                                  " outside " + std::to_string(z.cols()) + " classes");
    }
    const auto row = z.row(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - peak);
    loss += peak + std::log(total) - row[labels[i]];
  }
  const double n = static_cast<double>(z.rows());
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return tape_of(logits).record(
      "softmax_cross_entropy", Tensor::scalar(loss / n), {logits},
      [logits, lab = std::move(lab), probs = std::move(probs), n](Tape& t, const Tensor& g) {
        Tensor& gz = t.grad_buffer(logits);
        const double s = g[0] / n;
        for (std::size_t i = 0; i < probs.rows(); ++i) {
          for (std::size_t j = 0; j < probs.cols(); ++j) {
            gz(i, j) += s * (probs(i, j) - (j == lab[i] ? 1.0 : 0.0));
          }
        }
      });
}

}  // namespace gatsy::ad
