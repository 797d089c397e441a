#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gatsy/tensor.h"

namespace gatsy {

using NodeId = std::size_t;

/// Undirected, unweighted artist graph in compressed sparse row form.
/// Adjacency is symmetric, free of self-loops, and each neighbor list is
/// sorted ascending.
class ArtistGraph {
 public:
  ArtistGraph() = default;

  /// Builds a graph from an edge list. Edges are symmetrized and
  /// deduplicated; self-loops are dropped. Empty `artist_ids`/`names`
  /// default to the node index as a string.
  static ArtistGraph from_edges(std::size_t num_nodes,
                                std::span<const std::pair<NodeId, NodeId>> edges,
                                std::vector<std::string> artist_ids = {},
                                std::vector<std::string> names = {});

  std::size_t num_nodes() const { return artist_ids_.size(); }
  /// Number of undirected pairs.
  std::size_t num_edges() const { return neighbors_.size() / 2; }
  std::size_t degree(NodeId node) const { return offsets_[node + 1] - offsets_[node]; }
  std::span<const NodeId> neighbors(NodeId node) const {
    return {neighbors_.data() + offsets_[node], degree(node)};
  }
  bool has_edge(NodeId a, NodeId b) const;

  const std::vector<std::string>& artist_ids() const { return artist_ids_; }
  const std::vector<std::string>& names() const { return names_; }
  /// Each undirected edge once, as (low, high).
  std::vector<std::pair<NodeId, NodeId>> edge_list() const;

  /// Structural equality: adjacency, ids and names.
  friend bool operator==(const ArtistGraph& a, const ArtistGraph& b);

  /// Counters from the last from_edges() call that produced this graph.
  std::size_t dropped_self_loops() const { return dropped_self_loops_; }
  std::size_t duplicate_edges() const { return duplicate_edges_; }

 private:
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> neighbors_;
  std::vector<std::string> artist_ids_;
  std::vector<std::string> names_;
  std::size_t dropped_self_loops_ = 0;
  std::size_t duplicate_edges_ = 0;
};

enum class FeatureKind { kHandcrafted, kRandom };

struct FeatureMatrix {
  Tensor values;  // n x m
  FeatureKind kind = FeatureKind::kHandcrafted;

  std::size_t num_nodes() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
};

/// i.i.d. standard normal features; deterministic per seed.
FeatureMatrix random_features(std::size_t n, std::size_t m, std::uint64_t seed);

struct GraphStats {
  std::size_t num_nodes = 0;
  std::size_t total_connections = 0;  // undirected pairs
  std::size_t directed_entries = 0;   // nonzeros of the symmetric adjacency
  double avg_connections_per_artist = 0.0;  // directed_entries / n
  double avg_pairs_per_artist = 0.0;        // total_connections / n
  std::size_t q1 = 0;
  std::size_t q2 = 0;
  std::size_t q3 = 0;
};

/// Degree quartiles use the nearest-rank rule. Throws on an empty graph.
GraphStats compute_stats(const ArtistGraph& graph);

/// Nearest-rank percentile of an ascending sequence, p in (0, 100].
std::size_t nearest_rank(std::span<const std::size_t> sorted, double percent);

struct DatasetSplit {
  std::vector<NodeId> train;
  std::vector<NodeId> validation;
  std::vector<NodeId> test;
  std::uint64_t seed = 0;
};

/// Uniform random 80/10/10 node split. Validation and test sizes are
/// floor(n / 10); the remainder goes to training. Requires n >= 10.
DatasetSplit split_dataset(std::size_t num_nodes, std::uint64_t seed);

struct Subgraph {
  ArtistGraph graph;
  std::vector<NodeId> to_parent;  // local -> parent index
};

/// Induced subgraph on `allowed` (kept in ascending parent order).
Subgraph graph_restricted_to(const ArtistGraph& graph, std::span<const NodeId> allowed);

/// One message-passing hop. Destination nodes are the first `num_dst`
/// entries of `src_nodes`; row s of the CSR (offsets/neighbors) lists the
/// local source indices aggregated into destination s.
struct Block {
  std::vector<NodeId> src_nodes;
  std::size_t num_dst = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> neighbors;

  std::size_t num_src() const { return src_nodes.size(); }
  std::span<const NodeId> dst_nodes() const { return {src_nodes.data(), num_dst}; }
};

/// Blocks ordered from the input side to the output side: blocks.front()
/// consumes the raw node set, blocks.back() produces the batch. With no
/// blocks (no graph layers) the input nodes are the batch itself.
struct SampledNeighborhood {
  std::vector<NodeId> batch;
  std::vector<Block> blocks;

  std::span<const NodeId> input_nodes() const {
    return blocks.empty() ? std::span<const NodeId>(batch)
                          : std::span<const NodeId>(blocks.front().src_nodes);
  }
  std::span<const NodeId> output_nodes() const { return batch; }
};

inline constexpr std::size_t kAllNeighbors = std::numeric_limits<std::size_t>::max();

/// Whether a destination node aggregates itself. kAlways adds the node on
/// top of its sampled neighbors (fanout counts neighbors only); kIfIsolated
/// adds it only when it would otherwise have no neighbors.
enum class SelfLoops { kNone, kIfIsolated, kAlways };

/// Layer-wise uniform sampling without replacement, `fanouts` listed from
/// the input-side layer to the output-side layer. A node left without
/// neighbors under SelfLoops::kNone has an empty segment, which downstream
/// segment ops reject.
SampledNeighborhood neighbor_sample(const ArtistGraph& graph, std::span<const NodeId> batch,
                                    std::span<const std::size_t> fanouts, std::uint64_t seed,
                                    SelfLoops self_loops = SelfLoops::kIfIsolated);

/// Full neighborhoods for `layers` hops around `batch`.
SampledNeighborhood full_neighborhood(const ArtistGraph& graph, std::span<const NodeId> batch,
                                      std::size_t layers, SelfLoops self_loops = SelfLoops::kIfIsolated);

/// Every node of the graph in index order, with full neighborhoods.
SampledNeighborhood whole_graph(const ArtistGraph& graph, std::size_t layers,
                                SelfLoops self_loops = SelfLoops::kIfIsolated);

}  // namespace gatsy
