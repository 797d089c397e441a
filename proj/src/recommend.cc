#include "gatsy/recommend.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <openssl/evp.h>

namespace gatsy {
namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("SHA-256 initialization failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size) {
    if (EVP_DigestUpdate(ctx_, data, size) != 1) throw std::runtime_error("SHA-256 update failed");
  }
  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, digest, &len) != 1) {
      throw std::runtime_error("SHA-256 finalization failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[digest[i] >> 4];
      out += kHex[digest[i] & 15];
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::optional<std::string> EmbeddingStore::genre_of(NodeId node) const {
  if (!labels || node >= labels->labels.size() || labels->labels[node] == kUnresolved) {
    return std::nullopt;
  }
  return labels->name_of(labels->labels[node]);
}

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string fingerprint_files(const std::vector<fs::path>& files) {
  Sha256 h;
  for (const auto& f : files) {
    const std::string bytes = fs::exists(f) ? read_bytes(f) : std::string();
    const std::uint64_t len = bytes.size();
    h.update(&len, sizeof(len));
    h.update(bytes.data(), bytes.size());
  }
  return h.hex();
}

Tensor model_inputs(const Checkpoint& ckpt, const Dataset& dataset) {
  const std::size_t m = ckpt.params.config.input_dim;
  if (ckpt.feature_kind == FeatureKind::kRandom) {
    if (!ckpt.feature_seed) throw std::invalid_argument("random-feature checkpoint without a seed");
    return random_features(dataset.graph.num_nodes(), m, *ckpt.feature_seed).values;
  }
  if (dataset.features.values.cols() != m) {
    throw DimensionError("checkpoint expects " + std::to_string(m) + " features, dataset has " +
                         std::to_string(dataset.features.values.cols()));
  }
  return dataset.features.values;
}

EmbeddingStore build_store(const Checkpoint& ckpt, const Dataset& dataset,
                           std::string provenance) {
  EmbeddingStore store;
  store.z = forward_embed(ckpt.params, model_inputs(ckpt, dataset), dataset.graph);
  store.ids = dataset.graph.artist_ids();
  store.names = dataset.graph.names();
  store.labels = dataset.labels;
  store.provenance = std::move(provenance);
  return store;
}

LoadedService load_service(const fs::path& ckpt_path, const fs::path& data_dir) {
  LoadedService s;
  s.ckpt = load_checkpoint(ckpt_path);
  s.dataset = load_dataset(data_dir);
  const std::string hash =
      fingerprint_files({ckpt_path, data_dir / "ids.tsv", data_dir / "edges.tsv",
                         data_dir / "features.bin", data_dir / "features.txt",
                         data_dir / "labels.tsv"});
  s.store = build_store(s.ckpt, s.dataset, hash);
  return s;
}

std::vector<std::pair<NodeId, double>> nearest(const Tensor& z, NodeId query, std::size_t k,
                                               std::span<const NodeId> exclude) {
  if (query >= z.rows()) throw std::out_of_range("nearest: query " + std::to_string(query));
  std::set<NodeId> skip(exclude.begin(), exclude.end());
  skip.insert(query);
  std::vector<std::pair<double, NodeId>> scored;
  for (NodeId j = 0; j < z.rows(); ++j) {
    if (!skip.contains(j)) scored.emplace_back(linalg::squared_distance(z.row(query), z.row(j)), j);
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end());
  std::vector<std::pair<NodeId, double>> out;
  for (std::size_t i = 0; i < take; ++i) out.emplace_back(scored[i].second, std::sqrt(scored[i].first));
  return out;
}

namespace {

Recommendation to_items(const EmbeddingStore& store,
                        const std::vector<std::pair<NodeId, double>>& hits) {
  Recommendation rec;
  for (const auto& [node, dist] : hits) {
    rec.push_back({node, store.ids[node], store.names[node], dist, store.genre_of(node)});
  }
  return rec;
}

}  // namespace

Recommendation recommend(const EmbeddingStore& store, NodeId query, std::size_t k) {
  return to_items(store, nearest(store.z, query, k));
}

std::vector<NodeId> search_artists(const EmbeddingStore& store, const std::string& needle,
                                   std::size_t limit) {
  const std::string q = lower(needle);
  std::vector<NodeId> out;
  for (NodeId i = 0; i < store.size() && out.size() < limit; ++i) {
    if (lower(store.ids[i]).find(q) != std::string::npos ||
        lower(store.names[i]).find(q) != std::string::npos) {
      out.push_back(i);
    }
  }
  return out;
}

NodeId resolve_query(const EmbeddingStore& store, const std::string& query) {
  for (NodeId i = 0; i < store.size(); ++i) {
    if (store.ids[i] == query) return i;
  }
  const std::string q = lower(query);
  std::vector<NodeId> exact;
  for (NodeId i = 0; i < store.size(); ++i) {
    if (lower(store.names[i]) == q) exact.push_back(i);
  }
  if (exact.size() == 1) return exact.front();
  const std::vector<NodeId> partial = exact.empty() ? search_artists(store, query, 10) : exact;
  if (exact.empty() && partial.size() == 1) return partial.front();
  std::vector<std::string> suggestions;
  for (NodeId i : partial) suggestions.push_back(store.ids[i] + "\t" + store.names[i]);
  throw QueryError(partial.empty() ? "no artist matches '" + query + "'"
                                   : "'" + query + "' matches " + std::to_string(partial.size()) +
                                         (partial.size() == 10 ? "+" : "") + " artists",
                   std::move(suggestions));
}

AugmentedGraph inject_fictitious(const ArtistGraph& graph, const Tensor& features,
                                 const FictitiousArtistSpec& spec) {
  const std::size_t n = graph.num_nodes();
  if (spec.members.empty()) throw std::invalid_argument("inject_fictitious: S is empty");
  if (features.rows() != n) {
    throw DimensionError("inject_fictitious: " + std::to_string(features.rows()) +
                         " feature rows for " + std::to_string(n) + " nodes");
  }
  std::set<NodeId> seen;
  for (NodeId s : spec.members) {
    if (s >= n) throw std::out_of_range("inject_fictitious: member " + std::to_string(s));
    if (!seen.insert(s).second) {
      throw std::invalid_argument("inject_fictitious: member " + std::to_string(s) + " repeated");
    }
  }
  const std::size_t m = features.cols();
  std::vector<double> x(m, 0.0);
  if (spec.features) {
    if (spec.features->size() != m) {
      throw DimensionError("inject_fictitious: " + std::to_string(spec.features->size()) +
                           " explicit features, expected " + std::to_string(m));
    }
    x = *spec.features;
  } else {
    for (NodeId s : spec.members) {
      for (std::size_t j = 0; j < m; ++j) x[j] += features(s, j);
    }
    for (double& v : x) v /= static_cast<double>(spec.members.size());
  }

  auto edges = graph.edge_list();
  for (NodeId s : spec.members) edges.emplace_back(s, n);
  auto ids = graph.artist_ids();
  auto names = graph.names();
  ids.push_back("fictitious:" + spec.name);
  names.push_back(spec.name);

  AugmentedGraph out;
  out.graph = ArtistGraph::from_edges(n + 1, edges, std::move(ids), std::move(names));
  std::vector<double> values(features.values().begin(), features.values().end());
  values.insert(values.end(), x.begin(), x.end());
  out.features = Tensor(n + 1, m, std::move(values));
  out.node = n;
  return out;
}

FictitiousResult recommend_fictitious(const Checkpoint& ckpt, const Dataset& dataset,
                                      const FictitiousArtistSpec& spec, std::size_t k) {
  const AugmentedGraph aug = inject_fictitious(dataset.graph, model_inputs(ckpt, dataset), spec);
  FictitiousResult out;
  out.node = aug.node;
  out.embedding = forward_embed(ckpt.params, aug.features, aug.graph);
  for (const auto& [node, dist] : nearest(out.embedding, aug.node, k, spec.members)) {
    RecommendationItem item{node, dataset.graph.artist_ids()[node], dataset.graph.names()[node],
                            dist, std::nullopt};
    if (dataset.labels && dataset.labels->labels[node] != kUnresolved) {
      item.genre = dataset.labels->name_of(dataset.labels->labels[node]);
    }
    out.items.push_back(std::move(item));
  }
  return out;
}

Tensor project_2d(const Tensor& z) {
  if (z.rows() < 3) throw std::invalid_argument("project_2d: need at least 3 points");
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Matrix x = Eigen::Map<const Matrix>(z.data(), static_cast<Eigen::Index>(z.rows()),
                                      static_cast<Eigen::Index>(z.cols()));
  x.rowwise() -= x.colwise().mean();
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinV);
  const Eigen::MatrixXd& v = svd.matrixV();
  Tensor out(z.rows(), 2, 0.0);
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, v.cols()); ++c) {
    Eigen::VectorXd loading = v.col(c);
    Eigen::Index arg = 0;
    loading.cwiseAbs().maxCoeff(&arg);
    if (loading(arg) < 0) loading = -loading;
    const Eigen::VectorXd scores = x * loading;
    for (std::size_t r = 0; r < z.rows(); ++r) out(r, c) = scores(static_cast<Eigen::Index>(r));
  }
  return out;
}

}  // namespace gatsy
