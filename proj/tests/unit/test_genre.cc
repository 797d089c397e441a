#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "gatsy/dataset.h"
#include "gatsy/genre.h"
#include "support.h"

using namespace gatsy;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = fs::path(GATSY_FIXTURE_DIR) / "genre";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Stand-in for the MusicBrainz web service. Artist ids select behavior:
// "missing" answers 404, "flaky" fails once with 503, "busy" always 429,
// "bad" answers 400; anything else gets a one-genre document.
class FakeMusicBrainz {
 public:
  FakeMusicBrainz() {
    server_.Get(R"(/ws/2/artist/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      std::lock_guard lock(mu_);
      times_.push_back(std::chrono::steady_clock::now());
      agents_.push_back(req.get_header_value("User-Agent"));
      ++hits_[id];
      if (id == "missing") {
        res.status = 404;
      } else if (id == "flaky" && hits_[id] == 1) {
        res.status = 503;
      } else if (id == "busy") {
        res.status = 429;
      } else if (id == "bad") {
        res.status = 400;
      } else {
        res.set_content(R"({"genres":[{"name":"genre-)" + id + R"(","count":2}]})", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeMusicBrainz() {
    server_.stop();
    thread_.join();
  }
  FetchOptions options() const {
    FetchOptions o;
    o.base_url = "http://127.0.0.1:" + std::to_string(port_);
    o.min_interval = std::chrono::milliseconds(40);
    o.timeout = std::chrono::seconds(5);
    return o;
  }
  int hits(const std::string& id) {
    std::lock_guard lock(mu_);
    return hits_[id];
  }
  std::vector<std::chrono::steady_clock::time_point> times() {
    std::lock_guard lock(mu_);
    return times_;
  }
  std::vector<std::string> agents() {
    std::lock_guard lock(mu_);
    return agents_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::map<std::string, int> hits_;
  std::vector<std::chrono::steady_clock::time_point> times_;
  std::vector<std::string> agents_;
};

}  // namespace

TEST_CASE("parsing keeps vote counts and prefers curated genres") {
  const auto r = parse_musicbrainz_json("x", R"({"genres":[{"name":"rock","count":5},{"name":"pop","count":2}],
                                                 "tags":[{"name":"noise","count":90}]})");
  REQUIRE(r.tags.size() == 2);
  CHECK(r.tags[0].name == "rock");
  CHECK(r.tags[0].votes == 5);
  CHECK(r.tags[1].votes == 2);
  const auto t = parse_musicbrainz_json("x", R"({"genres":[],"tags":[{"name":"noise"}]})");
  REQUIRE(t.tags.size() == 1);
  CHECK(t.tags[0].votes == 0);
  CHECK(parse_musicbrainz_json("x", "{}").tags.empty());
  CHECK_THROWS_AS(parse_musicbrainz_json("x", "{nope"), ParseError);
  CHECK_THROWS_AS(parse_musicbrainz_json("x", R"({"genres":[{"name":"a","count":-1}]})"), ParseError);
  CHECK_THROWS_AS(parse_musicbrainz_json("x", R"({"genres":[{"count":1}]})"), ParseError);
  CHECK_THROWS_AS(parse_musicbrainz_json("x", "[]"), ParseError);
}

TEST_CASE("top tag breaks vote ties by name") {
  MusicBrainzRecord r{"x", {{"pop", 4}, {"funk", 4}, {"rock", 1}}};
  CHECK(top_tag(r)->name == "funk");
  CHECK(top_tag(MusicBrainzRecord{"y", {}}) == nullptr);
}

TEST_CASE("cache file names are single path components") {
  CHECK(cache_file_name("5f1c0a00-0000") == "5f1c0a00-0000.json");
  CHECK(cache_file_name("a/b c") == "a%2Fb%20c.json");
  CHECK(cache_file_name("..") == "%2E..json");
}

TEST_CASE("vocabulary by total votes") {
  const std::vector<MusicBrainzRecord> recs = {{"a", {{"rock", 5}, {"pop", 2}}},
                                               {"b", {{"jazz", 3}, {"pop", 1}}},
                                               {"c", {{"blues", 3}}}};
  CHECK(count_distinct_genres(recs) == 4);
  CHECK(build_vocabulary(recs, 3) == std::vector<std::string>{"rock", "blues", "jazz"});
  CHECK(build_vocabulary(recs, 10).size() == 4);
}

TEST_CASE("vote rule ignores genres outside the vocabulary") {
  const std::vector<std::string> vocab = {"rock", "pop", "jazz"};
  CHECK(resolve_by_votes({"a", {{"noise", 9}, {"pop", 1}}}, vocab) == 1);
  CHECK(resolve_by_votes({"a", {{"rock", 2}, {"jazz", 2}}}, vocab) == 2);
  CHECK(resolve_by_votes({"a", {{"noise", 9}}}, vocab) == kUnresolved);
}

TEST_CASE("text rule equals exhaustive cosine over the vocabulary prompts") {
  const HashingTextProvider provider;
  std::vector<std::string> vocab;
  for (const char* g : {"rock", "pop", "jazz", "hip hop", "electronic", "classical", "metal",
                        "folk", "blues", "country", "soul", "reggae", "punk", "funk", "rap",
                        "indie", "ambient", "house", "techno", "r&b", "disco", "latin", "gospel",
                        "grunge", "trance"}) {
    vocab.emplace_back(g);
  }
  REQUIRE(vocab.size() == 25);
  for (const char* raw : {"post-rock", "deep house", "jazz fusion", "black metal", "alt-country", "zydeco"}) {
    CAPTURE(raw);
    const auto q = provider.embed(genre_prompt(raw, "Some Artist"));
    std::size_t best = 0;
    double best_sim = -2;
    for (std::size_t g = 0; g < vocab.size(); ++g) {
      const double s = cosine(q, provider.embed(genre_prompt(vocab[g], "Some Artist")));
      if (s > best_sim) {
        best_sim = s;
        best = g;
      }
    }
    CHECK(resolve_by_text("Some Artist", raw, vocab, provider) == static_cast<GenreId>(best));
  }
  CHECK(genre_prompt("pop", "X") == "pop is the genre played by the artist X");
}

TEST_CASE("text providers") {
  const HashingTextProvider a, b(64, 1);
  CHECK(a.embed("rock") == a.embed("rock"));
  CHECK(a.embed("rock") != b.embed("rock"));
  CHECK(a.embed("rock").size() == 64);
  CHECK(cosine(a.embed("post-rock music"), a.embed("rock music")) >
        cosine(a.embed("post-rock music"), a.embed("classical harp")));

  const auto dir = fs::path(testing::temp_dir("vec"));
  std::ofstream(dir / "v.tsv") << "hello\t1,0\nworld\t0,1\n";
  VectorFileProvider file(dir / "v.tsv");
  CHECK(file.size() == 2);
  CHECK(file.embed("world") == std::vector<double>{0, 1});
  CHECK_THROWS_AS(file.embed("unknown"), ProviderError);
  // A failing provider leaves the artist unresolved instead of aborting.
  CHECK(resolve_by_text("A", "unknown", {"hello"}, file) == kUnresolved);

  CHECK(make_provider("file:" + (dir / "v.tsv").string()) != nullptr);
  CHECK_THROWS(make_provider("openai"));
}

TEST_CASE("neighbor mode with ties in vocabulary order") {
  const std::pair<NodeId, NodeId> star[] = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  const auto g = ArtistGraph::from_edges(5, star);
  // vocabulary {pop=0, rap=1}
  CHECK(resolve_by_neighbors(0, {kUnresolved, 1, 0, 1, 0}, g) == 0);
  CHECK(resolve_by_neighbors(0, {kUnresolved, 1, 1, 0, kUnresolved}, g) == 1);
  CHECK(resolve_by_neighbors(1, {kUnresolved, kUnresolved, 0, 0, 0}, g) == kUnresolved);
}

TEST_CASE("an unlabeled node inside a labeled clique takes the clique's genre") {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId i = 0; i < 5; ++i)
    for (NodeId j = i + 1; j < 5; ++j) e.emplace_back(i, j);
  const auto g = ArtistGraph::from_edges(5, e, {"a", "b", "c", "d", "e"});
  const std::vector<MusicBrainzRecord> recs = {{"a", {{"soul", 1}}}, {"b", {{"soul", 1}}},
                                               {"c", {{"soul", 2}}}, {"d", {{"funk", 1}}}};
  const auto fin = finalize_labels(g, recs, {"funk", "soul"}, nullptr);
  CHECK(fin.labels.labels == std::vector<GenreId>{1, 1, 1, 0, 1});
  CHECK(fin.rules[4] == ResolutionRule::kNeighbors);
  CHECK(fin.pruned_ids.empty());
}

TEST_CASE("finalize reports artists that stay unresolved") {
  const std::pair<NodeId, NodeId> e[] = {{0, 1}};
  const auto g = ArtistGraph::from_edges(2, e, {"a", "b"});
  try {
    finalize_labels(g, {}, {"rock"}, nullptr);
    FAIL("expected an error");
  } catch (const std::runtime_error& err) {
    CHECK(std::string(err.what()).find(" a b") != std::string::npos);
  }
}

TEST_CASE("bundled fixture reproduces the golden labels offline") {
  const auto graph = load_graph(kFixture / "edges.tsv", kFixture / "ids.tsv");
  const auto cache = fs::path(testing::temp_dir("cache"));
  fs::copy(kFixture / "cache", cache);
  FetchOptions options;
  options.offline = true;
  FetchReport report;
  const auto records = fetch_genres(graph.artist_ids(), cache, options, &report);
  CHECK(report.cache_hits == 8);
  CHECK(report.missing_offline == 1);
  const auto vocab = build_vocabulary(records, 3);
  CHECK(vocab == std::vector<std::string>{"rock", "jazz", "pop"});
  const HashingTextProvider provider;
  const auto fin = finalize_labels(graph, records, vocab, &provider);
  CHECK(format_labels(fin.labels, fin.graph) == slurp(kFixture / "golden_labels.tsv"));
  std::string rules;
  for (std::size_t i = 0; i < fin.rules.size(); ++i)
    rules += fin.graph.artist_ids()[i] + "\t" + to_string(fin.rules[i]) + "\n";
  CHECK(rules == slurp(kFixture / "golden_rules.tsv"));
  CHECK(fin.pruned_ids == std::vector<std::string>{"5f1c0a00-0000-4000-8000-000000000008"});
}

TEST_CASE("fetching caches responses, including not-found answers") {
  FakeMusicBrainz mb;
  const auto cache = fs::path(testing::temp_dir("fetch"));
  FetchReport report;
  const auto recs = fetch_genres({"one", "missing", "two"}, cache, mb.options(), &report);
  CHECK(report.fetched == 2);
  CHECK(report.not_found == 1);
  CHECK(recs[0].tags.at(0).name == "genre-one");
  CHECK(recs[1].tags.empty());
  CHECK(fs::exists(cache / "missing.json"));
  for (const auto& ua : mb.agents()) CHECK(ua.rfind("gatsy/", 0) == 0);

  FetchReport again;
  fetch_genres({"one", "missing", "two"}, cache, mb.options(), &again);
  CHECK(again.cache_hits == 3);
  CHECK(mb.hits("one") == 1);
  CHECK(mb.hits("missing") == 1);
}

TEST_CASE("requests are spaced by the rate limit") {
  FakeMusicBrainz mb;
  const auto cache = fs::path(testing::temp_dir("rate"));
  fetch_genres({"a", "b", "c", "d"}, cache, mb.options());
  const auto t = mb.times();
  REQUIRE(t.size() == 4);
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] - t[i - 1] >= std::chrono::milliseconds(35));
}

TEST_CASE("transient failures are retried, client errors are not") {
  FakeMusicBrainz mb;
  const auto cache = fs::path(testing::temp_dir("retry"));
  FetchReport report;
  const auto recs = fetch_genres({"flaky", "busy", "bad"}, cache, mb.options(), &report);
  CHECK(recs[0].tags.size() == 1);
  CHECK(mb.hits("flaky") == 2);
  CHECK(mb.hits("busy") == 3);
  CHECK(mb.hits("bad") == 1);
  CHECK(report.fetched == 1);
  CHECK(report.failed == 2);
  CHECK_FALSE(fs::exists(cache / "busy.json"));
}

TEST_CASE("a corrupt cache entry is fetched again") {
  FakeMusicBrainz mb;
  const auto cache = fs::path(testing::temp_dir("corrupt"));
  std::ofstream(cache / "one.json") << "{\"genres\": [";
  FetchReport report;
  const auto recs = fetch_genres({"one"}, cache, mb.options(), &report);
  CHECK(report.corrupt_cache == 1);
  CHECK(report.fetched == 1);
  CHECK(recs[0].tags.at(0).name == "genre-one");
  CHECK(parse_musicbrainz_json("one", slurp(cache / "one.json")).tags.size() == 1);
}

TEST_CASE("offline mode never touches the network") {
  FetchOptions o;
  o.base_url = "http://127.0.0.1:1";
  o.offline = true;
  FetchReport report;
  const auto recs = fetch_genres({"x"}, testing::temp_dir("offline"), o, &report);
  CHECK(report.missing_offline == 1);
  CHECK(recs[0].tags.empty());
}
