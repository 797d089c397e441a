#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gatsy/graph.h"

namespace gatsy {

/// Index into a genre vocabulary; kUnresolved marks a missing label.
using GenreId = int;
inline constexpr GenreId kUnresolved = -1;

struct GenreLabelSet {
  std::vector<std::string> vocabulary;
  std::vector<GenreId> labels;  // one per node

  bool complete() const;
  std::vector<std::size_t> unresolved_nodes() const;
  const std::string& name_of(GenreId id) const { return vocabulary.at(static_cast<std::size_t>(id)); }
};

struct Dataset {
  ArtistGraph graph;
  FeatureMatrix features;
  std::optional<GenreLabelSet> labels;
};

/// Malformed input file; the message carries the path and line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GraphLoadReport {
  std::size_t self_loops_dropped = 0;
  std::size_t duplicate_edges = 0;
};

/// Reads `id<TAB>display_name` lines (node order = line order) and
/// `id_a<TAB>id_b` edge lines. Unknown ids and malformed lines raise
/// ParseError naming the line.
ArtistGraph load_graph(const std::filesystem::path& edges_path,
                       const std::filesystem::path& ids_path, GraphLoadReport* report = nullptr);
void save_graph(const ArtistGraph& graph, const std::filesystem::path& edges_path,
                const std::filesystem::path& ids_path);

/// Text format: header `n m`, then n rows of m whitespace-separated reals.
/// Binary format: "GTSYFEAT", u32 n, u32 m, then n*m little-endian doubles.
/// load_features sniffs the magic to pick the format.
FeatureMatrix load_features(const std::filesystem::path& path);
void save_features_text(const FeatureMatrix& features, const std::filesystem::path& path);
void save_features_binary(const FeatureMatrix& features, const std::filesystem::path& path);

/// `id<TAB>genre` lines. The vocabulary is the sorted set of genres seen;
/// nodes without a line stay kUnresolved.
GenreLabelSet load_labels(const std::filesystem::path& path, const ArtistGraph& graph);
void save_labels(const GenreLabelSet& labels, const ArtistGraph& graph,
                 const std::filesystem::path& path);
std::string format_labels(const GenreLabelSet& labels, const ArtistGraph& graph);

/// Dataset directory layout: ids.tsv, edges.tsv, features.bin or
/// features.txt, and an optional labels.tsv.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                  bool binary_features = true);

}  // namespace gatsy
