#include "gatsy/genre.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

namespace gatsy {

namespace {

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// SplitMix64; portable across standard libraries, unlike the distributions.
std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ProviderError("embedding dimensions differ: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0) || !(nb > 0)) throw ProviderError("zero-norm embedding");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

GenreId vocab_index(const std::vector<std::string>& vocabulary, const std::string& genre) {
  const auto it = std::find(vocabulary.begin(), vocabulary.end(), genre);
  return it == vocabulary.end() ? kUnresolved : static_cast<GenreId>(it - vocabulary.begin());
}

}  // namespace

const GenreTag* top_tag(const MusicBrainzRecord& record) {
  const GenreTag* best = nullptr;
  for (const auto& tag : record.tags) {
    if (best == nullptr || tag.votes > best->votes ||
        (tag.votes == best->votes && tag.name < best->name)) {
      best = &tag;
    }
  }
  return best;
}

std::vector<double> HashingTextProvider::embed(const std::string& text) const {
  if (dim_ == 0) throw ProviderError("HashingTextProvider: zero dimension");
  const std::string padded = "  " + text + " ";
  std::vector<double> out(dim_, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::uint64_t state = fnv1a(std::string_view(padded).substr(i, 3), seed_);
    for (double& v : out) {
      v += static_cast<double>(splitmix(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
  }
  return out;
}

VectorFileProvider::VectorFileProvider(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected text<TAB>vector");
    }
    std::vector<double> v;
    std::istringstream fields(line.substr(tab + 1));
    std::string field;
    while (std::getline(fields, field, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(field, &used));
        if (used != field.size() && field.find_first_not_of(" ", used) != std::string::npos) {
          throw std::invalid_argument(field);
        }
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + field +
                         "'");
      }
    }
    if (v.empty() || (dim != 0 && v.size() != dim)) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": vector of length " +
                       std::to_string(v.size()));
    }
    dim = v.size();
    vectors_[line.substr(0, tab)] = std::move(v);
  }
}

std::vector<double> VectorFileProvider::embed(const std::string& text) const {
  const auto it = vectors_.find(text);
  if (it == vectors_.end()) throw ProviderError("no vector for \"" + text + "\"");
  return it->second;
}

std::unique_ptr<TextEmbeddingProvider> make_provider(const std::string& spec) {
  if (spec == "stub") return std::make_unique<HashingTextProvider>();
  if (spec.rfind("file:", 0) == 0) return std::make_unique<VectorFileProvider>(spec.substr(5));
  throw std::invalid_argument("unknown provider '" + spec + "' (expected stub or file:PATH)");
}

std::string genre_prompt(const std::string& genre, const std::string& artist_name) {
  return genre + " is the genre played by the artist " + artist_name;
}

std::size_t count_distinct_genres(const std::vector<MusicBrainzRecord>& records) {
  std::vector<std::string> names;
  for (const auto& r : records) {
    for (const auto& t : r.tags) names.push_back(t.name);
  }
  std::sort(names.begin(), names.end());
  return static_cast<std::size_t>(std::unique(names.begin(), names.end()) - names.begin());
}

std::vector<std::string> build_vocabulary(const std::vector<MusicBrainzRecord>& records,
                                          std::size_t size) {
  std::map<std::string, std::int64_t> totals;
  for (const auto& r : records) {
    for (const auto& t : r.tags) totals[t.name] += t.votes;
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(totals.begin(), totals.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() < size) {
    std::cerr << "warning: only " << ranked.size() << " distinct genres, vocabulary keeps all of "
              << "them instead of " << size << "\n";
  }
  std::vector<std::string> vocabulary;
  for (std::size_t i = 0; i < std::min(size, ranked.size()); ++i) {
    vocabulary.push_back(ranked[i].first);
  }
  return vocabulary;
}

GenreId resolve_by_votes(const MusicBrainzRecord& record,
                         const std::vector<std::string>& vocabulary) {
  const GenreTag* best = nullptr;
  for (const auto& tag : record.tags) {
    if (vocab_index(vocabulary, tag.name) == kUnresolved) continue;
    if (best == nullptr || tag.votes > best->votes ||
        (tag.votes == best->votes && tag.name < best->name)) {
      best = &tag;
    }
  }
  return best == nullptr ? kUnresolved : vocab_index(vocabulary, best->name);
}

GenreId resolve_by_text(const std::string& artist_name, const std::string& raw_genre,
                        const std::vector<std::string>& vocabulary,
                        const TextEmbeddingProvider& provider) {
  try {
    const auto query = provider.embed(genre_prompt(raw_genre, artist_name));
    GenreId best = kUnresolved;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < vocabulary.size(); ++g) {
      const double sim = cosine(query, provider.embed(genre_prompt(vocabulary[g], artist_name)));
      if (sim > best_sim) {
        best_sim = sim;
        best = static_cast<GenreId>(g);
      }
    }
    return best;
  } catch (const ProviderError& e) {
    std::cerr << "warning: text rule failed for " << artist_name << ": " << e.what() << "\n";
    return kUnresolved;
  }
}

GenreId resolve_by_neighbors(NodeId node, const std::vector<GenreId>& labels,
                             const ArtistGraph& graph) {
  std::map<GenreId, std::size_t> counts;
  for (NodeId nb : graph.neighbors(node)) {
    if (labels.at(nb) != kUnresolved) ++counts[labels[nb]];
  }
  GenreId best = kUnresolved;
  std::size_t best_count = 0;
  for (const auto& [genre, count] : counts) {  // ascending id, so ties keep the first
    if (count > best_count) {
      best = genre;
      best_count = count;
    }
  }
  return best;
}

const char* to_string(ResolutionRule rule) {
  switch (rule) {
    case ResolutionRule::kVotes: return "votes";
    case ResolutionRule::kText: return "text";
    case ResolutionRule::kNeighbors: return "neighbors";
    case ResolutionRule::kUnresolved: return "unresolved";
  }
  return "?";
}

FinalizedLabels finalize_labels(const ArtistGraph& graph,
                                const std::vector<MusicBrainzRecord>& records,
                                const std::vector<std::string>& vocabulary,
                                const TextEmbeddingProvider* provider) {
  const std::size_t n = graph.num_nodes();
  std::unordered_map<std::string, const MusicBrainzRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.artist_id, &r);

  std::vector<GenreId> labels(n, kUnresolved);
  std::vector<ResolutionRule> rules(n, ResolutionRule::kUnresolved);
  for (NodeId i = 0; i < n; ++i) {
    const auto it = by_id.find(graph.artist_ids()[i]);
    if (it == by_id.end()) continue;
    labels[i] = resolve_by_votes(*it->second, vocabulary);
    if (labels[i] != kUnresolved) {
      rules[i] = ResolutionRule::kVotes;
      continue;
    }
    const GenreTag* raw = top_tag(*it->second);
    if (raw != nullptr && provider != nullptr) {
      labels[i] = resolve_by_text(graph.names()[i], raw->name, vocabulary, *provider);
      if (labels[i] != kUnresolved) rules[i] = ResolutionRule::kText;
    }
  }

  // Synchronous rounds: every node in a round sees only the previous labels.
  for (bool changed = true; changed;) {
    changed = false;
    std::vector<GenreId> next = labels;
    for (NodeId i = 0; i < n; ++i) {
      if (labels[i] != kUnresolved) continue;
      next[i] = resolve_by_neighbors(i, labels, graph);
      if (next[i] != kUnresolved) {
        rules[i] = ResolutionRule::kNeighbors;
        changed = true;
      }
    }
    labels = std::move(next);
  }

  FinalizedLabels out;
  for (NodeId i = 0; i < n; ++i) {
    if (graph.degree(i) == 0) {
      out.pruned_ids.push_back(graph.artist_ids()[i]);
    } else {
      out.kept.push_back(i);
    }
  }
  std::vector<std::string> unresolved;
  for (NodeId i : out.kept) {
    if (labels[i] == kUnresolved) unresolved.push_back(graph.artist_ids()[i]);
  }
  if (!unresolved.empty()) {
    std::string msg = "finalize_labels: " + std::to_string(unresolved.size()) +
                      " node(s) left without a genre:";
    for (const auto& id : unresolved) msg += " " + id;
    throw std::runtime_error(msg);
  }
  Subgraph sub = graph_restricted_to(graph, out.kept);
  out.graph = std::move(sub.graph);
  out.labels.vocabulary = vocabulary;
  for (NodeId i : out.kept) {
    out.labels.labels.push_back(labels[i]);
    out.rules.push_back(rules[i]);
  }
  return out;
}

}  // namespace gatsy
