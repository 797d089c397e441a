#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gatsy/dataset.h"

namespace gatsy {

struct GenreTag {
  std::string name;
  std::int64_t votes = 0;  // >= 0
};

struct MusicBrainzRecord {
  std::string artist_id;
  std::vector<GenreTag> tags;
};

/// Parses one MusicBrainz artist document. Curated "genres" win over free
/// "tags" when both are present and non-empty; each entry needs a "name"
/// and an optional non-negative "count". Throws ParseError on malformed JSON.
MusicBrainzRecord parse_musicbrainz_json(const std::string& artist_id, const std::string& body);

/// Tag with the most votes, ties broken by the lexicographically smaller
/// name. nullptr when the record has no tags.
const GenreTag* top_tag(const MusicBrainzRecord& record);

// ---------------------------------------------------------------------------
// Fetching

/// Enforces a minimum spacing between successive acquire() calls.
class RateLimiter {
 public:
  explicit RateLimiter(std::chrono::milliseconds min_interval) : min_interval_(min_interval) {}
  void acquire();

 private:
  std::chrono::milliseconds min_interval_;
  std::chrono::steady_clock::time_point last_{};
  bool first_ = true;
};

struct FetchOptions {
  std::string base_url = "https://musicbrainz.org";
  /// "{id}" is replaced by the artist id.
  std::string path_template = "/ws/2/artist/{id}?inc=genres+tags&fmt=json";
  std::string user_agent = "gatsy/0.1 ( artist-similarity research )";
  bool offline = false;
  int max_attempts = 3;
  std::chrono::milliseconds min_interval{1000};
  std::chrono::seconds timeout{10};
};

struct FetchReport {
  std::size_t cache_hits = 0;
  std::size_t fetched = 0;
  std::size_t not_found = 0;
  std::size_t failed = 0;          // network or HTTP failure after all attempts
  std::size_t missing_offline = 0; // offline and not cached
  std::size_t corrupt_cache = 0;
};

/// One record per id, in input order. Responses are cached as raw JSON in
/// `cache_dir/<id>.json`; a cached 404 is stored as an empty document.
/// Failed or unavailable lookups yield an empty tag list.
std::vector<MusicBrainzRecord> fetch_genres(const std::vector<std::string>& ids,
                                            const std::filesystem::path& cache_dir,
                                            const FetchOptions& options = {},
                                            FetchReport* report = nullptr);

/// Cache file name for an id; characters outside [A-Za-z0-9._-] are
/// percent-encoded so any id maps to a single path component.
std::string cache_file_name(const std::string& artist_id);

// ---------------------------------------------------------------------------
// Text embeddings

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TextEmbeddingProvider {
 public:
  virtual ~TextEmbeddingProvider() = default;
  /// Same text gives the same vector. Throws ProviderError on failure.
  virtual std::vector<double> embed(const std::string& text) const = 0;
};

/// Deterministic stand-in for a sentence encoder: every character trigram
/// of the padded text seeds a pseudo-random dense vector and the vectors
/// are summed, so texts sharing substrings land close together.
class HashingTextProvider final : public TextEmbeddingProvider {
 public:
  explicit HashingTextProvider(std::size_t dim = 64, std::uint64_t seed = 0)
      : dim_(dim), seed_(seed) {}
  std::vector<double> embed(const std::string& text) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Vectors precomputed by an external encoder, one `text<TAB>v1,v2,...`
/// line each. Looking up an unknown text throws ProviderError.
class VectorFileProvider final : public TextEmbeddingProvider {
 public:
  explicit VectorFileProvider(const std::filesystem::path& path);
  std::vector<double> embed(const std::string& text) const override;
  std::size_t size() const { return vectors_.size(); }

 private:
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// "stub" or "file:PATH".
std::unique_ptr<TextEmbeddingProvider> make_provider(const std::string& spec);

std::string genre_prompt(const std::string& genre, const std::string& artist_name);

// ---------------------------------------------------------------------------
// Resolution rules

/// Number of distinct tag names across all records.
std::size_t count_distinct_genres(const std::vector<MusicBrainzRecord>& records);

/// The `size` genres with the largest total vote count, ties broken
/// lexicographically. With fewer distinct genres all are kept and a warning
/// goes to stderr.
std::vector<std::string> build_vocabulary(const std::vector<MusicBrainzRecord>& records,
                                          std::size_t size = 25);

GenreId resolve_by_votes(const MusicBrainzRecord& record,
                         const std::vector<std::string>& vocabulary);

/// Vocabulary entry whose prompt is most cosine-similar to the raw genre's
/// prompt for the same artist. Provider failure gives kUnresolved.
GenreId resolve_by_text(const std::string& artist_name, const std::string& raw_genre,
                        const std::vector<std::string>& vocabulary,
                        const TextEmbeddingProvider& provider);

/// Most common label among labeled neighbors; ties go to the smaller id.
GenreId resolve_by_neighbors(NodeId node, const std::vector<GenreId>& labels,
                             const ArtistGraph& graph);

enum class ResolutionRule { kVotes, kText, kNeighbors, kUnresolved };
const char* to_string(ResolutionRule rule);

struct FinalizedLabels {
  ArtistGraph graph;        // degree-0 nodes removed
  GenreLabelSet labels;     // complete, indexed like `graph`
  std::vector<ResolutionRule> rules;  // indexed like `graph`
  std::vector<NodeId> kept;           // kept node -> index in the input graph
  std::vector<std::string> pruned_ids;
};

/// Votes, then text on the top raw tag, then neighbor mode repeated in
/// synchronous rounds until nothing changes. Disconnected nodes are then
/// dropped. Throws std::runtime_error listing any node still unresolved.
/// `records` are matched to nodes by artist id; `provider` may be null.
FinalizedLabels finalize_labels(const ArtistGraph& graph,
                                const std::vector<MusicBrainzRecord>& records,
                                const std::vector<std::string>& vocabulary,
                                const TextEmbeddingProvider* provider);

}  // namespace gatsy
