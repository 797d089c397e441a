#include "gatsy/model.h"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gatsy {

using nlohmann::json;

const char* to_string(GcKind kind) {
  switch (kind) {
    case GcKind::kNone: return "none";
    case GcKind::kSage: return "sage";
    case GcKind::kGat: return "gat";
  }
  return "?";
}

GcKind parse_gc_kind(const std::string& name) {
  if (name == "none" || name == "fc") return GcKind::kNone;
  if (name == "sage") return GcKind::kSage;
  if (name == "gat") return GcKind::kGat;
  throw std::invalid_argument("unknown layer kind '" + name + "' (expected none, sage or gat)");
}

void ModelConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0) {
    throw std::invalid_argument("ModelConfig: input_dim and hidden_dim must be positive");
  }
  if (fc_layers + num_gc() == 0) throw std::invalid_argument("ModelConfig: no layers");
  if (gc_kind == GcKind::kGat && attention_heads != 1) {
    throw std::invalid_argument("ModelConfig: only single-head attention is supported, got " +
                                std::to_string(attention_heads) + " heads");
  }
  if (genre_head && num_classes < 2) {
    throw std::invalid_argument("ModelConfig: genre head needs at least 2 classes");
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw std::invalid_argument("ModelConfig: leaky_slope must lie in (0, 1)");
  }
}

ModelConfig model_preset(const std::string& name, std::size_t input_dim) {
  ModelConfig c;
  c.input_dim = input_dim;
  if (name == "fc") {
    c.gc_kind = GcKind::kNone;
    c.gc_layers = 0;
    c.batch_norm = false;
  } else if (name == "sage" || name == "sage-bn") {
    c.gc_kind = GcKind::kSage;
    c.gc_layers = 3;
    c.batch_norm = name == "sage-bn";
  } else if (name == "gatsy") {
    c.gc_kind = GcKind::kGat;
    c.gc_layers = 2;
  } else {
    throw std::invalid_argument("unknown model '" + name + "' (expected fc, sage, sage-bn, gatsy)");
  }
  return c;
}

std::string config_to_json(const ModelConfig& c) {
  json j = {{"input_dim", c.input_dim},
            {"hidden_dim", c.hidden_dim},
            {"fc_layers", c.fc_layers},
            {"gc_layers", c.gc_layers},
            {"gc_kind", to_string(c.gc_kind)},
            {"attention_heads", c.attention_heads},
            {"batch_norm", c.batch_norm},
            {"genre_head", c.genre_head},
            {"num_classes", c.num_classes},
            {"self_inclusion", c.self_inclusion},
            {"attention_self_loops", c.attention_self_loops},
            {"leaky_slope", c.leaky_slope}};
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelConfig c;
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.fc_layers = j.at("fc_layers").get<std::size_t>();
    c.gc_layers = j.at("gc_layers").get<std::size_t>();
    c.gc_kind = parse_gc_kind(j.at("gc_kind").get<std::string>());
    c.attention_heads = j.value("attention_heads", std::size_t{1});
    c.batch_norm = j.at("batch_norm").get<bool>();
    c.genre_head = j.value("genre_head", false);
    c.num_classes = j.value("num_classes", std::size_t{25});
    c.self_inclusion = j.value("self_inclusion", true);
    c.attention_self_loops = j.value("attention_self_loops", true);
    c.leaky_slope = j.value("leaky_slope", 0.2);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (!(config == other.config) || weights != other.weights) return false;
  if (bn_stats.size() != other.bn_stats.size()) return false;
  for (const auto& [name, s] : bn_stats) {
    const auto it = other.bn_stats.find(name);
    if (it == other.bn_stats.end() || !(s.running_mean == it->second.running_mean) ||
        !(s.running_var == it->second.running_var)) {
      return false;
    }
  }
  return true;
}

std::vector<std::string> layer_names(const ModelConfig& config) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < config.fc_layers; ++i) names.push_back("fc" + std::to_string(i));
  for (std::size_t i = 0; i < config.num_gc(); ++i) names.push_back("gc" + std::to_string(i));
  if (config.genre_head) {
    names.push_back("head0");
    names.push_back("head1");
  }
  return names;
}

namespace {

struct LayerShape {
  std::string name;
  std::string kind;
  std::size_t in = 0;
  std::size_t out = 0;
  bool bn = false;
};

// The trunk is fc layers then gc layers; its last layer is the output and
// carries neither batch norm nor activation. Head layers never use batch norm.
std::vector<LayerShape> layer_shapes(const ModelConfig& c) {
  std::vector<LayerShape> shapes;
  const std::size_t trunk = c.fc_layers + c.num_gc();
  std::size_t width = c.input_dim;
  for (std::size_t i = 0; i < trunk; ++i) {
    LayerShape s;
    const bool fc = i < c.fc_layers;
    s.name = fc ? "fc" + std::to_string(i) : "gc" + std::to_string(i - c.fc_layers);
    s.kind = fc ? "fc" : to_string(c.gc_kind);
    s.in = width;
    s.out = c.hidden_dim;
    s.bn = c.batch_norm && i + 1 < trunk;
    width = s.out;
    shapes.push_back(s);
  }
  if (c.genre_head) {
    shapes.push_back({"head0", "head", c.hidden_dim, c.hidden_dim, false});
    shapes.push_back({"head1", "head", c.hidden_dim, c.num_classes, false});
  }
  return shapes;
}

Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

ModelParams build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  std::mt19937_64 rng(seed);
  for (const auto& s : layer_shapes(config)) {
    const std::size_t w_rows = s.kind == "sage" ? 2 * s.in : s.in;
    p.weights[s.name + ".W"] = glorot(w_rows, s.out, rng);
    if (s.kind == "gat") p.weights[s.name + ".a"] = glorot(2 * s.out, 1, rng);
    p.weights[s.name + ".b"] = Tensor(1, s.out, 0.0);
    if (s.bn) {
      p.weights[s.name + ".gamma"] = Tensor(1, s.out, 1.0);
      p.weights[s.name + ".beta"] = Tensor(1, s.out, 0.0);
      p.bn_stats[s.name] = ad::BatchNormStats{Tensor(1, s.out, 0.0), Tensor(1, s.out, 1.0)};
    }
  }
  return p;
}

std::size_t count_params(const ModelParams& params) {
  std::size_t total = 0;
  for (const auto& [name, t] : params.weights) total += t.size();
  return total;
}

std::vector<LayerParamCount> parameter_breakdown(const ModelParams& params) {
  std::vector<LayerParamCount> out;
  for (const auto& s : layer_shapes(params.config)) {
    LayerParamCount row;
    row.layer = s.name;
    row.kind = s.kind;
    for (const char* suffix : {".W", ".a", ".b", ".gamma", ".beta"}) {
      const auto it = params.weights.find(s.name + suffix);
      if (it == params.weights.end()) continue;
      row.tensors.emplace_back(suffix + 1, it->second.size());
      row.total += it->second.size();
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_breakdown(const ModelParams& params) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "layer" << std::setw(6) << "kind" << std::right
      << std::setw(10) << "W" << std::setw(8) << "a" << std::setw(8) << "b" << std::setw(8)
      << "gamma" << std::setw(8) << "beta" << std::setw(10) << "total" << "\n";
  std::size_t grand = 0;
  for (const auto& row : parameter_breakdown(params)) {
    auto get = [&](const std::string& key) -> std::string {
      for (const auto& [name, count] : row.tensors) {
        if (name == key) return std::to_string(count);
      }
      return "-";
    };
    out << std::left << std::setw(8) << row.layer << std::setw(6) << row.kind << std::right
        << std::setw(10) << get("W") << std::setw(8) << get("a") << std::setw(8) << get("b")
        << std::setw(8) << get("gamma") << std::setw(8) << get("beta") << std::setw(10)
        << row.total << "\n";
    grand += row.total;
  }
  out << std::left << std::setw(14) << "total" << std::right << std::setw(52) << grand << "\n";
  return out.str();
}

std::string explain_difference(const ModelParams& params, std::size_t reference) {
  const std::size_t total = count_params(params);
  const auto diff = static_cast<long long>(reference) - static_cast<long long>(total);
  std::ostringstream out;
  out << "reference " << reference << ", this model " << total << ", difference " << diff;
  if (reference > 0) {
    out << " (" << std::fixed << std::setprecision(3)
        << 100.0 * std::abs(static_cast<double>(diff)) / static_cast<double>(reference) << "%)";
  }
  const auto bn_pair = static_cast<long long>(2 * params.config.hidden_dim);
  if (diff != 0 && bn_pair > 0 && diff % bn_pair == 0) {
    const long long layers = diff / bn_pair;
    out << "; equals gamma+beta of " << std::abs(layers) << " batch-norm layer(s) of width "
        << params.config.hidden_dim << (layers > 0 ? " that this model does not have"
                                                   : " that the reference does not count");
  }
  return out.str();
}

// ---------------------------------------------------------------------------

GatOutput gat_layer(const ad::Var& h_src, const Block& block, const ad::Var& w, const ad::Var& a,
                    const ad::Var& bias, double leaky_slope) {
  const std::size_t f_out = w.cols();
  if (a.rows() != 2 * f_out || a.cols() != 1) {
    throw DimensionError("gat_layer: attention vector " + shape_string(a.value()) +
                         " for width " + std::to_string(f_out));
  }
  if (h_src.rows() != block.src_nodes.size()) {
    throw DimensionError("gat_layer: " + std::to_string(h_src.rows()) + " input rows for " +
                         std::to_string(block.src_nodes.size()) + " block sources");
  }
  ad::check_segments(block.offsets, block.neighbors.size(), "gat_layer");
  const ad::Var wh = ad::matmul(h_src, w);
  const ad::Var a_dst = ad::slice_rows(a, 0, f_out);
  const ad::Var a_src = ad::slice_rows(a, f_out, f_out);
  const ad::Var s_dst = ad::matmul(ad::slice_rows(wh, 0, block.num_dst), a_dst);
  const ad::Var s_src = ad::matmul(wh, a_src);

  std::vector<std::size_t> edge_dst(block.neighbors.size());
  for (std::size_t d = 0; d < block.num_dst; ++d) {
    for (std::size_t e = block.offsets[d]; e < block.offsets[d + 1]; ++e) edge_dst[e] = d;
  }
  const ad::Var scores = ad::leaky_relu(
      ad::add(ad::gather_rows(s_dst, edge_dst), ad::gather_rows(s_src, block.neighbors)),
      leaky_slope);
  const ad::Var alpha = ad::segment_softmax(scores, block.offsets);
  const ad::Var agg = ad::segment_weighted_sum(alpha, wh, block.neighbors, block.offsets);
  return {ad::add_row(agg, bias), alpha};
}

ad::Var sage_layer(const ad::Var& h_src, const Block& block, const ad::Var& w,
                   const ad::Var& bias) {
  if (h_src.rows() != block.src_nodes.size()) {
    throw DimensionError("sage_layer: " + std::to_string(h_src.rows()) + " input rows for " +
                         std::to_string(block.src_nodes.size()) + " block sources");
  }
  const ad::Var self = ad::slice_rows(h_src, 0, block.num_dst);
  const ad::Var neigh = ad::segment_mean(h_src, block.neighbors, block.offsets);
  return ad::add_row(ad::matmul(ad::concat_cols(self, neigh), w), bias);
}

Network::Network(ad::Tape& tape, ModelParams& params, bool trainable)
    : tape_(tape), params_(params) {
  for (const auto& [name, t] : params.weights) {
    vars_.emplace(name, trainable ? tape.parameter(name, t) : tape.constant(t));
  }
}

ad::Var Network::dense(const std::string& layer, const ad::Var& h) {
  return ad::add_row(ad::matmul(h, vars_.at(layer + ".W")), vars_.at(layer + ".b"));
}

ad::Var Network::finish(const std::string& layer, ad::Var h, bool last, Mode mode) {
  if (last) return h;
  const auto stats = params_.bn_stats.find(layer);
  if (stats != params_.bn_stats.end()) {
    h = ad::batch_norm(h, vars_.at(layer + ".gamma"), vars_.at(layer + ".beta"), stats->second,
                       mode == Mode::kTrain ? ad::BatchNormMode::kTrain
                                            : ad::BatchNormMode::kEval);
  }
  return ad::elu(h);
}

ForwardResult Network::forward(const Tensor& x, const SampledNeighborhood& hood, Mode mode) {
  const ModelConfig& c = params_.config;
  if (hood.blocks.size() != c.num_gc()) {
    throw std::invalid_argument("Network::forward: " + std::to_string(hood.blocks.size()) +
                                " blocks for " + std::to_string(c.num_gc()) + " layers");
  }
  if (x.rows() != hood.input_nodes().size() || x.cols() != c.input_dim) {
    throw DimensionError("Network::forward: features " + shape_string(x) + ", expected [" +
                         std::to_string(hood.input_nodes().size()) + "x" +
                         std::to_string(c.input_dim) + "]");
  }
  const std::size_t trunk = c.fc_layers + c.num_gc();
  ForwardResult result;
  ad::Var h = tape_.constant(x);
  for (std::size_t i = 0; i < c.fc_layers; ++i) {
    const std::string name = "fc" + std::to_string(i);
    h = finish(name, dense(name, h), i + 1 == trunk, mode);
  }
  for (std::size_t i = 0; i < c.num_gc(); ++i) {
    const std::string name = "gc" + std::to_string(i);
    const Block& block = hood.blocks[i];
    ad::Var out;
    if (c.gc_kind == GcKind::kGat) {
      GatOutput g = gat_layer(h, block, vars_.at(name + ".W"), vars_.at(name + ".a"),
                              vars_.at(name + ".b"), c.leaky_slope);
      out = g.out;
      result.attention.push_back(g.alpha);
    } else {
      out = sage_layer(h, block, vars_.at(name + ".W"), vars_.at(name + ".b"));
    }
    h = finish(name, out, c.fc_layers + i + 1 == trunk, mode);
  }
  result.embedding = h;
  if (c.genre_head) {
    result.logits = dense("head1", ad::elu(dense("head0", h)));
  }
  return result;
}

Tensor gather_inputs(const Tensor& features, const SampledNeighborhood& hood) {
  return linalg::gather_rows(features, hood.input_nodes());
}

namespace {

ForwardResult eval_forward(ad::Tape& tape, ModelParams& params, const Tensor& x,
                           const ArtistGraph& graph) {
  if (x.rows() != graph.num_nodes()) {
    throw DimensionError("forward: " + std::to_string(x.rows()) + " feature rows for " +
                         std::to_string(graph.num_nodes()) + " nodes");
  }
  const SampledNeighborhood hood =
      whole_graph(graph, params.config.num_gc(), params.config.self_loops());
  Network net(tape, params, false);
  return net.forward(gather_inputs(x, hood), hood, Mode::kEval);
}

}  // namespace

Tensor forward_embed(const ModelParams& params, const Tensor& x, const ArtistGraph& graph) {
  ad::Tape tape;
  ModelParams copy = params;  // eval mode leaves statistics alone; the copy keeps this const
  return eval_forward(tape, copy, x, graph).embedding.value();
}

SupervisedOutput forward_supervised(const ModelParams& params, const Tensor& x,
                                    const ArtistGraph& graph) {
  if (!params.config.genre_head) {
    throw std::invalid_argument("forward_supervised: model has no genre head");
  }
  ad::Tape tape;
  ModelParams copy = params;
  const ForwardResult r = eval_forward(tape, copy, x, graph);
  return {r.embedding.value(), r.logits.value()};
}

}  // namespace gatsy
