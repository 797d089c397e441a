#include "support.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <unistd.h>

namespace gatsy::testing {

namespace {

double evaluate(const LossFn& loss, const std::map<std::string, Tensor>& inputs) {
  ad::Tape tape;
  std::map<std::string, ad::Var> vars;
  for (const auto& [name, value] : inputs) vars.emplace(name, tape.parameter(name, value));
  return loss(tape, vars).value().item();
}

}  // namespace

GradCheck check_gradients(const LossFn& loss, const std::map<std::string, Tensor>& inputs,
                          double eps, double floor) {
  ad::Gradients analytic;
  {
    ad::Tape tape;
    std::map<std::string, ad::Var> vars;
    for (const auto& [name, value] : inputs) vars.emplace(name, tape.parameter(name, value));
    analytic = tape.backward(loss(tape, vars));
  }
  GradCheck result;
  auto probe = inputs;
  for (const auto& [name, value] : inputs) {
    Tensor& x = probe.at(name);
    const Tensor& g = analytic.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + eps;
      const double up = evaluate(loss, probe);
      x[i] = saved - eps;
      const double down = evaluate(loss, probe);
      x[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double err = std::abs(g[i] - numeric) /
                         std::max({std::abs(g[i]), std::abs(numeric), floor});
      if (result.worst.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

std::vector<std::pair<std::string, GradCheck>> op_gradient_checks(std::uint64_t seed) {
  using Vars = std::map<std::string, ad::Var>;
  std::mt19937_64 rng(seed);
  const std::map<std::string, Tensor> dense = {{"a", random_tensor(4, 3, rng)},
                                               {"b", random_tensor(4, 3, rng)},
                                               {"row", random_tensor(1, 3, rng)},
                                               {"w", random_tensor(3, 5, rng)}};
  std::vector<std::pair<std::string, GradCheck>> out;

  out.emplace_back("matmul add add_row sub mul scale add_scalar elu mean",
                   check_gradients([](ad::Tape&, const Vars& v) {
                     auto h = ad::add_row(ad::mul(v.at("a"), ad::sub(v.at("b"), v.at("a"))),
                                          v.at("row"));
                     h = ad::add(ad::scale(h, 1.7), ad::add_scalar(v.at("b"), 0.3));
                     return ad::mean(ad::elu(ad::matmul(h, v.at("w"))));
                   }, dense));

  out.emplace_back("gather_rows slice_rows concat_cols leaky_relu relu sum",
                   check_gradients([](ad::Tape&, const Vars& v) {
                     const std::size_t idx[] = {3, 0, 0, 2};
                     auto g = ad::gather_rows(v.at("a"), idx);
                     auto c = ad::concat_cols(ad::slice_rows(g, 1, 3),
                                              ad::slice_rows(v.at("b"), 0, 3));
                     return ad::sum(ad::mul(ad::leaky_relu(c, 0.2), ad::relu(ad::add_scalar(c, 0.1))));
                   }, dense));

  out.emplace_back("row_distance euclidean_distance", check_gradients([](ad::Tape&, const Vars& v) {
    return ad::add(ad::sum(ad::row_distance(v.at("a"), v.at("b"))),
                   ad::euclidean_distance(v.at("row"), ad::slice_rows(v.at("b"), 2, 1)));
  }, dense));

  static constexpr std::size_t offsets[] = {0, 2, 5, 6};
  static constexpr std::size_t nbrs[] = {0, 3, 1, 2, 3, 0};
  const std::map<std::string, Tensor> seg = {{"s", random_tensor(6, 1, rng, -2, 2)},
                                             {"h", random_tensor(4, 3, rng)}};
  out.emplace_back("segment_softmax segment_weighted_sum segment_mean",
                   check_gradients([](ad::Tape&, const Vars& v) {
                     const auto alpha = ad::segment_softmax(v.at("s"), offsets);
                     const auto agg = ad::segment_weighted_sum(alpha, v.at("h"), nbrs, offsets);
                     const auto avg = ad::segment_mean(v.at("h"), nbrs, offsets);
                     return ad::sum(ad::mul(ad::elu(agg), ad::add_scalar(avg, 0.5)));
                   }, seg));

  const std::map<std::string, Tensor> bn = {{"x", random_tensor(6, 4, rng, -2, 2)},
                                            {"gamma", random_tensor(1, 4, rng, 0.5, 1.5)},
                                            {"beta", random_tensor(1, 4, rng)}};
  out.emplace_back("batch_norm softmax_cross_entropy", check_gradients([](ad::Tape&, const Vars& v) {
    static constexpr std::size_t labels[] = {0, 3, 1, 1, 2, 3};
    ad::BatchNormStats stats{Tensor(1, 4), Tensor(1, 4, 1.0)};
    const auto y = ad::batch_norm(v.at("x"), v.at("gamma"), v.at("beta"), stats,
                                  ad::BatchNormMode::kTrain);
    return ad::softmax_cross_entropy(ad::elu(y), labels);
  }, bn));
  return out;
}

Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo,
                     double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

ArtistGraph random_connected_graph(std::size_t n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId i = 0; i < n; ++i) {
    edges.emplace_back(i, (i + 1) % n);
    for (NodeId j = i + 2; j < n; ++j) {
      if (coin(rng)) edges.emplace_back(i, j);
    }
  }
  return ArtistGraph::from_edges(n, edges);
}

ArtistGraph permute_graph(const ArtistGraph& graph, const std::vector<NodeId>& perm) {
  const std::size_t n = graph.num_nodes();
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (const auto& [a, b] : graph.edge_list()) edges.emplace_back(perm[a], perm[b]);
  std::vector<std::string> ids(n), names(n);
  for (NodeId i = 0; i < n; ++i) {
    ids[perm[i]] = graph.artist_ids()[i];
    names[perm[i]] = graph.names()[i];
  }
  return ArtistGraph::from_edges(n, edges, std::move(ids), std::move(names));
}

std::string temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("gatsy-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace gatsy::testing
