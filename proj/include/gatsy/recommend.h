#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gatsy/checkpoint.h"
#include "gatsy/dataset.h"

namespace gatsy {

/// Frozen eval-mode embedding of a whole dataset.
struct EmbeddingStore {
  Tensor z;  // one row per artist
  std::vector<std::string> ids;
  std::vector<std::string> names;
  std::optional<GenreLabelSet> labels;
  std::string provenance;  // hex SHA-256 of checkpoint and data bytes

  std::size_t size() const { return ids.size(); }
  std::optional<std::string> genre_of(NodeId node) const;
};

/// Feature matrix the checkpoint was trained against: the dataset's own
/// features, or the seeded random matrix for random-feature checkpoints.
Tensor model_inputs(const Checkpoint& ckpt, const Dataset& dataset);

/// Throws DimensionError when the checkpoint's input width does not match.
EmbeddingStore build_store(const Checkpoint& ckpt, const Dataset& dataset,
                           std::string provenance = {});

/// Loads `ckpt_path` and the dataset directory and fingerprints their bytes.
struct LoadedService {
  Checkpoint ckpt;
  Dataset dataset;
  EmbeddingStore store;
};
LoadedService load_service(const std::filesystem::path& ckpt_path,
                           const std::filesystem::path& data_dir);

std::string sha256_hex(const std::string& bytes);
/// SHA-256 over the concatenated contents of `files`, each prefixed by its
/// byte length; missing files contribute a zero length.
std::string fingerprint_files(const std::vector<std::filesystem::path>& files);

struct RecommendationItem {
  NodeId node = 0;
  std::string id;
  std::string name;
  double distance = 0;
  std::optional<std::string> genre;
};

using Recommendation = std::vector<RecommendationItem>;

/// The k nearest rows to `query` by Euclidean distance, ascending, ties by
/// index, skipping the query itself and every node in `exclude`.
std::vector<std::pair<NodeId, double>> nearest(const Tensor& z, NodeId query, std::size_t k,
                                               std::span<const NodeId> exclude = {});

Recommendation recommend(const EmbeddingStore& store, NodeId query, std::size_t k);

/// Unknown or ambiguous query; `suggestions` lists plausible artists.
class QueryError : public std::invalid_argument {
 public:
  QueryError(const std::string& what, std::vector<std::string> suggestions)
      : std::invalid_argument(what), suggestions(std::move(suggestions)) {}
  std::vector<std::string> suggestions;
};

/// Exact id, else a case-insensitive exact name match, else the only
/// substring match. Throws QueryError otherwise.
NodeId resolve_query(const EmbeddingStore& store, const std::string& query);

/// Nodes whose id or name contains `needle`, case-insensitively, in index order.
std::vector<NodeId> search_artists(const EmbeddingStore& store, const std::string& needle,
                                   std::size_t limit = 50);

struct FictitiousArtistSpec {
  std::string name;
  std::vector<NodeId> members;  // the set S of similar artists
  std::optional<std::vector<double>> features;
};

struct AugmentedGraph {
  ArtistGraph graph;
  Tensor features;
  NodeId node = 0;  // index of the new artist (always the last)
};

/// Appends one artist linked to every member of S, with features equal to
/// the mean of S's rows unless given explicitly. Inputs are not modified.
AugmentedGraph inject_fictitious(const ArtistGraph& graph, const Tensor& features,
                                 const FictitiousArtistSpec& spec);

struct FictitiousResult {
  Recommendation items;
  Tensor embedding;  // augmented n+1 x d
  NodeId node = 0;
};

/// Eval-mode forward on the augmented graph; the k nearest original artists
/// to the new node, members of S excluded.
FictitiousResult recommend_fictitious(const Checkpoint& ckpt, const Dataset& dataset,
                                      const FictitiousArtistSpec& spec, std::size_t k);

/// PCA onto the top two principal components. Each component's sign makes
/// its largest-magnitude loading positive. Throws for fewer than 3 rows.
Tensor project_2d(const Tensor& z);

}  // namespace gatsy
