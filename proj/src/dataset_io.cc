#include "gatsy/dataset.h"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace gatsy {
namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[8] = {'G', 'T', 'S', 'Y', 'F', 'E', 'A', 'T'};

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

[[noreturn]] void parse_fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool split_tab(const std::string& line, std::string& left, std::string& right) {
  const auto tab = line.find('\t');
  if (tab == std::string::npos) return false;
  left = line.substr(0, tab);
  right = line.substr(tab + 1);
  return !left.empty();
}

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const fs::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError(path.string() + ": truncated binary file");
  return value;
}

}  // namespace

bool GenreLabelSet::complete() const {
  return std::none_of(labels.begin(), labels.end(), [](GenreId g) { return g == kUnresolved; });
}

std::vector<std::size_t> GenreLabelSet::unresolved_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kUnresolved) out.push_back(i);
  }
  return out;
}

ArtistGraph load_graph(const fs::path& edges_path, const fs::path& ids_path,
                       GraphLoadReport* report) {
  std::vector<std::string> ids;
  std::vector<std::string> names;
  std::unordered_map<std::string, NodeId> index;
  {
    auto in = open_in(ids_path);
    std::string line, id, name;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      strip_cr(line);
      if (line.empty()) continue;
      if (!split_tab(line, id, name)) parse_fail(ids_path, lineno, "expected id<TAB>name");
      if (!index.emplace(id, ids.size()).second) parse_fail(ids_path, lineno, "duplicate id " + id);
      ids.push_back(id);
      names.push_back(name);
    }
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  {
    auto in = open_in(edges_path);
    std::string line, a, b;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      strip_cr(line);
      if (line.empty()) continue;
      if (!split_tab(line, a, b) || b.empty() || b.find('\t') != std::string::npos) {
        parse_fail(edges_path, lineno, "expected id_a<TAB>id_b");
      }
      const auto ia = index.find(a);
      const auto ib = index.find(b);
      if (ia == index.end()) parse_fail(edges_path, lineno, "unknown id " + a);
      if (ib == index.end()) parse_fail(edges_path, lineno, "unknown id " + b);
      edges.emplace_back(ia->second, ib->second);
    }
  }
  const std::size_t n = ids.size();
  ArtistGraph g = ArtistGraph::from_edges(n, edges, std::move(ids), std::move(names));
  if (report != nullptr) {
    report->self_loops_dropped = g.dropped_self_loops();
    report->duplicate_edges = g.duplicate_edges();
  }
  return g;
}

void save_graph(const ArtistGraph& graph, const fs::path& edges_path, const fs::path& ids_path) {
  {
    auto out = open_out(ids_path);
    for (NodeId i = 0; i < graph.num_nodes(); ++i) {
      out << graph.artist_ids()[i] << '\t' << graph.names()[i] << '\n';
    }
  }
  auto out = open_out(edges_path);
  for (const auto& [a, b] : graph.edge_list()) {
    out << graph.artist_ids()[a] << '\t' << graph.artist_ids()[b] << '\n';
  }
}

FeatureMatrix load_features(const fs::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (in && std::memcmp(magic, kFeatureMagic, sizeof(magic)) == 0) {
    const auto n = read_le<std::uint32_t>(in, path);
    const auto m = read_le<std::uint32_t>(in, path);
    std::vector<double> values(static_cast<std::size_t>(n) * m);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw ParseError(path.string() + ": truncated feature data");
    FeatureMatrix out{Tensor(n, m, std::move(values)), FeatureKind::kHandcrafted};
    require_finite(out.values, "load_features");
    return out;
  }
  in.clear();
  in.seekg(0);
  std::string line;
  std::size_t lineno = 0;
  std::size_t n = 0, m = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::istringstream header(line);
    if (!(header >> n >> m)) parse_fail(path, lineno, "expected header `n m`");
    break;
  }
  Tensor values(n, m);
  std::size_t row = 0;
  while (row < n && std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::istringstream fields(line);
    for (std::size_t j = 0; j < m; ++j) {
      if (!(fields >> values(row, j))) {
        parse_fail(path, lineno, "expected " + std::to_string(m) + " values");
      }
    }
    std::string extra;
    if (fields >> extra) parse_fail(path, lineno, "more than " + std::to_string(m) + " values");
    ++row;
  }
  if (row != n) parse_fail(path, lineno, "expected " + std::to_string(n) + " rows, got " +
                                             std::to_string(row));
  if (!values.all_finite()) throw ParseError(path.string() + ": non-finite feature value");
  return FeatureMatrix{std::move(values), FeatureKind::kHandcrafted};
}

void save_features_text(const FeatureMatrix& features, const fs::path& path) {
  auto out = open_out(path);
  out.precision(17);
  out << features.values.rows() << ' ' << features.values.cols() << '\n';
  for (std::size_t i = 0; i < features.values.rows(); ++i) {
    const auto row = features.values.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << row[j];
    out << '\n';
  }
}

void save_features_binary(const FeatureMatrix& features, const fs::path& path) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out.write(kFeatureMagic, sizeof(kFeatureMagic));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.values.rows()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.values.cols()));
  out.write(reinterpret_cast<const char*>(features.values.data()),
            static_cast<std::streamsize>(features.values.size() * sizeof(double)));
}

GenreLabelSet load_labels(const fs::path& path, const ArtistGraph& graph) {
  std::unordered_map<std::string, NodeId> index;
  for (NodeId i = 0; i < graph.num_nodes(); ++i) index.emplace(graph.artist_ids()[i], i);
  auto in = open_in(path);
  std::string line, id, genre;
  std::size_t lineno = 0;
  std::vector<std::pair<NodeId, std::string>> rows;
  std::map<std::string, GenreId> vocab;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    if (!split_tab(line, id, genre) || genre.empty()) parse_fail(path, lineno, "expected id<TAB>genre");
    const auto it = index.find(id);
    if (it == index.end()) parse_fail(path, lineno, "unknown id " + id);
    rows.emplace_back(it->second, genre);
    vocab.emplace(genre, 0);
  }
  GenreLabelSet out;
  for (auto& [name, gid] : vocab) {
    gid = static_cast<GenreId>(out.vocabulary.size());
    out.vocabulary.push_back(name);
  }
  out.labels.assign(graph.num_nodes(), kUnresolved);
  for (const auto& [node, name] : rows) out.labels[node] = vocab.at(name);
  return out;
}

std::string format_labels(const GenreLabelSet& labels, const ArtistGraph& graph) {
  std::ostringstream out;
  for (NodeId i = 0; i < graph.num_nodes(); ++i) {
    if (labels.labels.at(i) == kUnresolved) continue;
    out << graph.artist_ids()[i] << '\t' << labels.name_of(labels.labels[i]) << '\n';
  }
  return out.str();
}

void save_labels(const GenreLabelSet& labels, const ArtistGraph& graph, const fs::path& path) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << format_labels(labels, graph);
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.graph = load_graph(dir / "edges.tsv", dir / "ids.tsv");
  const fs::path bin = dir / "features.bin";
  ds.features = load_features(fs::exists(bin) ? bin : dir / "features.txt");
  if (ds.features.num_nodes() != ds.graph.num_nodes()) {
    throw ParseError(dir.string() + ": " + std::to_string(ds.features.num_nodes()) +
                     " feature rows for " + std::to_string(ds.graph.num_nodes()) + " artists");
  }
  if (fs::exists(dir / "labels.tsv")) ds.labels = load_labels(dir / "labels.tsv", ds.graph);
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& dir, bool binary_features) {
  fs::create_directories(dir);
  save_graph(dataset.graph, dir / "edges.tsv", dir / "ids.tsv");
  if (binary_features) {
    fs::remove(dir / "features.txt");
    save_features_binary(dataset.features, dir / "features.bin");
  } else {
    fs::remove(dir / "features.bin");
    save_features_text(dataset.features, dir / "features.txt");
  }
  if (dataset.labels) save_labels(*dataset.labels, dataset.graph, dir / "labels.tsv");
}

}  // namespace gatsy
