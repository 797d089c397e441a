#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gatsy/autodiff.h"
#include "gatsy/graph.h"

namespace gatsy {

enum class GcKind { kNone, kSage, kGat };

const char* to_string(GcKind kind);
GcKind parse_gc_kind(const std::string& name);

struct ModelConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 256;
  std::size_t fc_layers = 3;
  std::size_t gc_layers = 2;
  GcKind gc_kind = GcKind::kGat;
  std::size_t attention_heads = 1;
  bool batch_norm = true;
  bool genre_head = false;
  std::size_t num_classes = 25;
  /// Nodes with no neighbors aggregate themselves.
  bool self_inclusion = true;
  /// Attention layers always include the destination node among the
  /// attended nodes. Ignored by mean-aggregation layers, which carry the
  /// node's own state through their concatenation.
  bool attention_self_loops = true;
  double leaky_slope = 0.2;

  /// Message-passing layers actually built (zero for the FC-only model).
  std::size_t num_gc() const { return gc_kind == GcKind::kNone ? 0 : gc_layers; }
  SelfLoops self_loops() const {
    if (gc_kind == GcKind::kGat && attention_self_loops) return SelfLoops::kAlways;
    return self_inclusion ? SelfLoops::kIfIsolated : SelfLoops::kNone;
  }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Named architectures: "fc", "sage", "sage-bn", "gatsy". The FC baseline
/// runs without batch norm; "sage" is three mean-aggregation layers.
ModelConfig model_preset(const std::string& name, std::size_t input_dim);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

struct ModelParams {
  ModelConfig config;
  std::map<std::string, Tensor> weights;  // trainable tensors, by name
  std::map<std::string, ad::BatchNormStats> bn_stats;  // by layer name

  bool operator==(const ModelParams& other) const;
};

/// Glorot-uniform W and attention vectors, zero biases and shifts, unit
/// scales, running mean 0 and variance 1. Deterministic per seed.
ModelParams build_model(const ModelConfig& config, std::uint64_t seed);

/// Trainable scalars; running statistics are excluded.
std::size_t count_params(const ModelParams& params);

struct LayerParamCount {
  std::string layer;
  std::string kind;  // "fc", "gat", "sage", "head"
  std::vector<std::pair<std::string, std::size_t>> tensors;
  std::size_t total = 0;
};

std::vector<LayerParamCount> parameter_breakdown(const ModelParams& params);
/// Human-readable table of parameter_breakdown with a grand total.
std::string format_breakdown(const ModelParams& params);
/// One line comparing count_params against `reference`. A difference that is
/// a whole number of gamma/beta pairs at the hidden width is attributed to
/// that many batch-norm layers.
std::string explain_difference(const ModelParams& params, std::size_t reference);

/// Ordered layer names: fc0.., then gc0.., then head0, head1 if present.
std::vector<std::string> layer_names(const ModelConfig& config);

// ---------------------------------------------------------------------------
// Forward passes

enum class Mode { kTrain, kEval };

struct GatOutput {
  ad::Var out;    // num_dst x F'
  ad::Var alpha;  // one weight per block edge
};

/// Single-head attention over `block`: scores leaky_relu(a1.Wh_i + a2.Wh_j)
/// are softmax-normalized per destination and used to average Wh over the
/// neighborhood; `bias` (1 x F') is added afterwards. `a` is 2F' x 1 with
/// the destination half first.
GatOutput gat_layer(const ad::Var& h_src, const Block& block, const ad::Var& w, const ad::Var& a,
                    const ad::Var& bias, double leaky_slope);

/// concat(h_dst, mean over neighbors of h_src) times W plus bias.
ad::Var sage_layer(const ad::Var& h_src, const Block& block, const ad::Var& w,
                   const ad::Var& bias);

struct ForwardResult {
  ad::Var embedding;               // rows follow the neighborhood's batch
  ad::Var logits;                  // valid only with a genre head
  std::vector<ad::Var> attention;  // one per GAT layer
};

/// Binds a ModelParams to a tape. Trainable tensors become tape parameters
/// (tracked under their names) when `trainable`, constants otherwise.
/// Train-mode forwards update the running statistics in `params`.
class Network {
 public:
  Network(ad::Tape& tape, ModelParams& params, bool trainable);

  /// `x` holds one feature row per node of `hood.input_nodes()`.
  ForwardResult forward(const Tensor& x, const SampledNeighborhood& hood, Mode mode);

  const ad::Var& param(const std::string& name) const { return vars_.at(name); }
  const ModelConfig& config() const { return params_.config; }

 private:
  ad::Var dense(const std::string& layer, const ad::Var& h);
  ad::Var finish(const std::string& layer, ad::Var h, bool last, Mode mode);

  ad::Tape& tape_;
  ModelParams& params_;
  std::map<std::string, ad::Var> vars_;
};

/// Eval-mode forward of every node with full neighborhoods: n x hidden_dim.
Tensor forward_embed(const ModelParams& params, const Tensor& x, const ArtistGraph& graph);

struct SupervisedOutput {
  Tensor embedding;
  Tensor scores;  // n x num_classes, unnormalized
};

/// Like forward_embed plus the class scores of the genre head.
SupervisedOutput forward_supervised(const ModelParams& params, const Tensor& x,
                                    const ArtistGraph& graph);

/// Feature rows for the neighborhood's input nodes.
Tensor gather_inputs(const Tensor& features, const SampledNeighborhood& hood);

}  // namespace gatsy
