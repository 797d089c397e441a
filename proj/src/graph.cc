#include "gatsy/graph.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace gatsy {

ArtistGraph ArtistGraph::from_edges(std::size_t num_nodes,
                                    std::span<const std::pair<NodeId, NodeId>> edges,
                                    std::vector<std::string> artist_ids,
                                    std::vector<std::string> names) {
  ArtistGraph g;
  if (artist_ids.empty()) {
    artist_ids.reserve(num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i) artist_ids.push_back(std::to_string(i));
  }
  if (names.empty()) names = artist_ids;
  if (artist_ids.size() != num_nodes || names.size() != num_nodes) {
    throw std::invalid_argument("ArtistGraph: " + std::to_string(num_nodes) + " nodes but " +
                                std::to_string(artist_ids.size()) + " ids and " +
                                std::to_string(names.size()) + " names");
  }

  std::vector<std::pair<NodeId, NodeId>> directed;
  directed.reserve(edges.size() * 2);
  for (const auto& [a, b] : edges) {
    if (a >= num_nodes || b >= num_nodes) {
      throw std::out_of_range("ArtistGraph: edge (" + std::to_string(a) + ", " +
                              std::to_string(b) + ") outside " + std::to_string(num_nodes) +
                              " nodes");
    }
    if (a == b) {
      ++g.dropped_self_loops_;
      continue;
    }
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  std::sort(directed.begin(), directed.end());
  const std::size_t before = directed.size();
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  g.duplicate_edges_ = (before - directed.size()) / 2;

  g.offsets_.assign(num_nodes + 1, 0);
  for (const auto& e : directed) ++g.offsets_[e.first + 1];
  std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
  g.neighbors_.reserve(directed.size());
  for (const auto& e : directed) g.neighbors_.push_back(e.second);
  g.artist_ids_ = std::move(artist_ids);
  g.names_ = std::move(names);
  return g;
}

bool ArtistGraph::has_edge(NodeId a, NodeId b) const {
  const auto n = neighbors(a);
  return std::binary_search(n.begin(), n.end(), b);
}

std::vector<std::pair<NodeId, NodeId>> ArtistGraph::edge_list() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(num_edges());
  for (NodeId a = 0; a < num_nodes(); ++a) {
    for (NodeId b : neighbors(a)) {
      if (a < b) out.emplace_back(a, b);
    }
  }
  return out;
}

bool operator==(const ArtistGraph& a, const ArtistGraph& b) {
  return a.offsets_ == b.offsets_ && a.neighbors_ == b.neighbors_ &&
         a.artist_ids_ == b.artist_ids_ && a.names_ == b.names_;
}

FeatureMatrix random_features(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureMatrix out{Tensor(n, m), FeatureKind::kRandom};
  for (double& v : out.values.values()) v = normal(rng);
  return out;
}

std::size_t nearest_rank(std::span<const std::size_t> sorted, double percent) {
  if (sorted.empty()) throw std::invalid_argument("nearest_rank of an empty sequence");
  const double rank = std::ceil(percent / 100.0 * static_cast<double>(sorted.size()));
  const std::size_t idx = static_cast<std::size_t>(std::max(rank, 1.0)) - 1;
  return sorted[std::min(idx, sorted.size() - 1)];
}

GraphStats compute_stats(const ArtistGraph& graph) {
  const std::size_t n = graph.num_nodes();
  if (n == 0) throw std::invalid_argument("compute_stats: empty graph");
  std::vector<std::size_t> degrees(n);
  for (NodeId i = 0; i < n; ++i) degrees[i] = graph.degree(i);
  std::sort(degrees.begin(), degrees.end());
  GraphStats s;
  s.num_nodes = n;
  s.total_connections = graph.num_edges();
  s.directed_entries = 2 * graph.num_edges();
  s.avg_connections_per_artist = static_cast<double>(s.directed_entries) / static_cast<double>(n);
  s.avg_pairs_per_artist = static_cast<double>(s.total_connections) / static_cast<double>(n);
  s.q1 = nearest_rank(degrees, 25.0);
  s.q2 = nearest_rank(degrees, 50.0);
  s.q3 = nearest_rank(degrees, 75.0);
  return s;
}

DatasetSplit split_dataset(std::size_t num_nodes, std::uint64_t seed) {
  if (num_nodes < 10) {
    throw std::invalid_argument("split_dataset: need at least 10 nodes, got " +
                                std::to_string(num_nodes));
  }
  std::vector<NodeId> order(num_nodes);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = num_nodes / 10;
  const std::size_t n_test = num_nodes / 10;
  const std::size_t n_train = num_nodes - n_val - n_test;
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Subgraph graph_restricted_to(const ArtistGraph& graph, std::span<const NodeId> allowed) {
  std::vector<NodeId> keep(allowed.begin(), allowed.end());
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> local(graph.num_nodes(), kAbsent);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] >= graph.num_nodes()) {
      throw std::out_of_range("graph_restricted_to: node " + std::to_string(keep[i]) +
                              " not in graph");
    }
    local[keep[i]] = i;
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<std::string> ids;
  std::vector<std::string> names;
  ids.reserve(keep.size());
  names.reserve(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    ids.push_back(graph.artist_ids()[keep[i]]);
    names.push_back(graph.names()[keep[i]]);
    for (NodeId nb : graph.neighbors(keep[i])) {
      if (local[nb] != kAbsent && keep[i] < nb) edges.emplace_back(i, local[nb]);
    }
  }
  Subgraph out;
  out.graph = ArtistGraph::from_edges(keep.size(), edges, std::move(ids), std::move(names));
  out.to_parent = std::move(keep);
  return out;
}

namespace {

// Builds the block whose destinations are `dst`, extending the source list
// with newly reached nodes in order of first appearance.
Block make_block(const ArtistGraph& graph, std::span<const NodeId> dst, std::size_t fanout,
                 std::mt19937_64* rng, SelfLoops self_loops) {
  Block block;
  block.src_nodes.assign(dst.begin(), dst.end());
  block.num_dst = dst.size();
  std::unordered_map<NodeId, std::size_t> local;
  local.reserve(dst.size() * 4);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!local.emplace(dst[i], i).second) {
      throw std::invalid_argument("neighbor_sample: node " + std::to_string(dst[i]) +
                                  " appears twice in the batch");
    }
  }
  block.offsets.reserve(dst.size() + 1);
  block.offsets.push_back(0);
  std::vector<NodeId> chosen;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const auto nbrs = graph.neighbors(dst[i]);
    chosen.assign(nbrs.begin(), nbrs.end());
    if (rng != nullptr && chosen.size() > fanout) {
      // Partial Fisher-Yates: the first `fanout` slots become the sample.
      for (std::size_t k = 0; k < fanout; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, chosen.size() - 1);
        std::swap(chosen[k], chosen[pick(*rng)]);
      }
      chosen.resize(fanout);
      std::sort(chosen.begin(), chosen.end());
    }
    if (self_loops == SelfLoops::kAlways ||
        (self_loops == SelfLoops::kIfIsolated && chosen.empty())) {
      if (std::find(chosen.begin(), chosen.end(), dst[i]) == chosen.end()) chosen.push_back(dst[i]);
    }
    for (NodeId nb : chosen) {
      auto [it, inserted] = local.emplace(nb, block.src_nodes.size());
      if (inserted) block.src_nodes.push_back(nb);
      block.neighbors.push_back(it->second);
    }
    block.offsets.push_back(block.neighbors.size());
  }
  return block;
}

SampledNeighborhood build_layers(const ArtistGraph& graph, std::span<const NodeId> batch,
                                 std::span<const std::size_t> fanouts, std::mt19937_64* rng,
                                 SelfLoops self_loops) {
  SampledNeighborhood out;
  out.batch.assign(batch.begin(), batch.end());
  for (NodeId node : batch) {
    if (node >= graph.num_nodes()) {
      throw std::out_of_range("neighbor_sample: node " + std::to_string(node) + " not in graph");
    }
  }
  out.blocks.resize(fanouts.size());
  std::vector<NodeId> frontier(batch.begin(), batch.end());
  for (std::size_t layer = fanouts.size(); layer-- > 0;) {
    out.blocks[layer] = make_block(graph, frontier, fanouts[layer], rng, self_loops);
    frontier = out.blocks[layer].src_nodes;
  }
  return out;
}

}  // namespace

SampledNeighborhood neighbor_sample(const ArtistGraph& graph, std::span<const NodeId> batch,
                                    std::span<const std::size_t> fanouts, std::uint64_t seed,
                                    SelfLoops self_loops) {
  std::mt19937_64 rng(seed);
  return build_layers(graph, batch, fanouts, &rng, self_loops);
}

SampledNeighborhood full_neighborhood(const ArtistGraph& graph, std::span<const NodeId> batch,
                                      std::size_t layers, SelfLoops self_loops) {
  const std::vector<std::size_t> fanouts(layers, kAllNeighbors);
  return build_layers(graph, batch, fanouts, nullptr, self_loops);
}

SampledNeighborhood whole_graph(const ArtistGraph& graph, std::size_t layers,
                                SelfLoops self_loops) {
  std::vector<NodeId> all(graph.num_nodes());
  std::iota(all.begin(), all.end(), NodeId{0});
  return full_neighborhood(graph, all, layers, self_loops);
}

}  // namespace gatsy
