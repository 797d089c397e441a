#include "gatsy/synthetic.h"

#include <random>
#include <stdexcept>
#include <string>

namespace gatsy {

Dataset generate_synthetic(const SyntheticConfig& config) {
  if (!(config.p_in > config.p_out) || config.p_out < 0.0 || config.p_in > 1.0) {
    throw std::invalid_argument("generate_synthetic: need 0 <= p_out < p_in <= 1, got p_in=" +
                                std::to_string(config.p_in) +
                                " p_out=" + std::to_string(config.p_out));
  }
  if (config.blocks == 0 || config.nodes_per_block == 0 || config.feature_dim == 0) {
    throw std::invalid_argument("generate_synthetic: blocks, nodes_per_block and feature_dim "
                                "must be positive");
  }
  if (config.noise < 0.0) throw std::invalid_argument("generate_synthetic: negative noise");

  const std::size_t n = config.blocks * config.nodes_per_block;
  std::mt19937_64 rng(config.seed);
  std::bernoulli_distribution inside(config.p_in);
  std::bernoulli_distribution across(config.p_out);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto block_of = [&](std::size_t i) { return i / config.nodes_per_block; };
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<std::size_t> degree(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool hit = block_of(i) == block_of(j) ? inside(rng) : across(rng);
      if (hit) {
        edges.emplace_back(i, j);
        ++degree[i];
        ++degree[j];
      }
    }
  }

  Tensor means(config.blocks, config.feature_dim);
  for (double& v : means.values()) v = config.separation * normal(rng);
  Tensor raw(n, config.feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < config.feature_dim; ++j) {
      raw(i, j) = means(block_of(i), j) + config.noise * normal(rng);
    }
  }

  // Prune isolated nodes and renumber the survivors in order.
  std::vector<std::size_t> local(n, n);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (degree[i] > 0) {
      local[i] = kept.size();
      kept.push_back(i);
    }
  }
  std::vector<std::pair<NodeId, NodeId>> kept_edges;
  kept_edges.reserve(edges.size());
  for (const auto& [a, b] : edges) kept_edges.emplace_back(local[a], local[b]);

  std::vector<std::string> ids;
  std::vector<std::string> names;
  GenreLabelSet labels;
  for (std::size_t b = 0; b < config.blocks; ++b) labels.vocabulary.push_back("block_" + std::to_string(b));
  Tensor features(kept.size(), config.feature_dim);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const std::size_t i = kept[r];
    ids.push_back("syn" + std::to_string(i));
    names.push_back("Artist " + std::to_string(i) + " (block " + std::to_string(block_of(i)) + ")");
    labels.labels.push_back(static_cast<GenreId>(block_of(i)));
    std::copy(raw.row(i).begin(), raw.row(i).end(), features.row(r).begin());
  }

  Dataset ds;
  ds.graph = ArtistGraph::from_edges(kept.size(), kept_edges, std::move(ids), std::move(names));
  ds.features = FeatureMatrix{std::move(features), FeatureKind::kHandcrafted};
  ds.labels = std::move(labels);
  return ds;
}

}  // namespace gatsy
