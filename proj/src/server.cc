#include "gatsy/server.h"

#include <charconv>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace gatsy {

using nlohmann::json;

namespace {

ApiResponse ok(const json& j) { return {200, j.dump()}; }

ApiResponse error(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

std::optional<std::size_t> parse_count(const std::string& text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

json artist_json(const EmbeddingStore& store, NodeId i) {
  json j = {{"index", i}, {"id", store.ids[i]}, {"name", store.names[i]}};
  if (const auto g = store.genre_of(i)) j["genre"] = *g;
  return j;
}

json items_json(const Recommendation& rec) {
  json items = json::array();
  for (const auto& it : rec) {
    json j = {{"index", it.node}, {"id", it.id}, {"name", it.name}, {"distance", it.distance}};
    if (it.genre) j["genre"] = *it.genre;
    items.push_back(std::move(j));
  }
  return items;
}

}  // namespace

ApiService::ApiService(LoadedService service)
    : service_(std::move(service)),
      projection_(service_.store.size() >= 3 ? project_2d(service_.store.z) : Tensor()) {}

std::optional<NodeId> ApiService::find_node(const std::string& key) const {
  const auto& ids = service_.store.ids;
  for (NodeId i = 0; i < ids.size(); ++i) {
    if (ids[i] == key) return i;
  }
  if (const auto idx = parse_count(key); idx && *idx < ids.size()) return *idx;
  return std::nullopt;
}

ApiResponse ApiService::handle(const std::string& method, const std::string& path,
                               const std::map<std::string, std::string>& params,
                               const std::string& body) const {
  try {
    const std::string artists_prefix = "/api/artists/";
    const std::string recommend_prefix = "/api/recommend/";
    if (method == "GET") {
      if (path == "/api/health") return health();
      if (path == "/api/artists") return artists(params);
      if (path == "/api/projection") return projection();
      if (path.rfind(artists_prefix, 0) == 0 && path.size() > artists_prefix.size()) {
        return artist(path.substr(artists_prefix.size()));
      }
      if (path.rfind(recommend_prefix, 0) == 0 && path.size() > recommend_prefix.size()) {
        return recommend_for(path.substr(recommend_prefix.size()), params);
      }
    } else if (method == "POST" && path == "/api/fictitious") {
      return fictitious(body);
    }
    return error(404, "no route for " + method + " " + path);
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

ApiResponse ApiService::health() const {
  const auto& cfg = service_.ckpt.params.config;
  return ok({{"status", "ok"},
             {"artists", service_.store.size()},
             {"embedding_dim", service_.store.z.cols()},
             {"model", to_string(cfg.gc_kind)},
             {"provenance", service_.store.provenance}});
}

ApiResponse ApiService::artists(const std::map<std::string, std::string>& params) const {
  const auto q = params.find("q");
  if (q == params.end()) return error(400, "missing query parameter q");
  std::size_t limit = 50;
  if (const auto l = params.find("limit"); l != params.end()) {
    const auto v = parse_count(l->second);
    if (!v || *v == 0) return error(400, "limit must be a positive integer");
    limit = *v;
  }
  json results = json::array();
  for (NodeId i : search_artists(service_.store, q->second, limit)) {
    results.push_back(artist_json(service_.store, i));
  }
  return ok({{"query", q->second}, {"results", results}});
}

ApiResponse ApiService::artist(const std::string& key) const {
  const auto node = find_node(key);
  if (!node) return error(404, "unknown artist " + key);
  json j = artist_json(service_.store, *node);
  json neighbors = json::array();
  for (NodeId nb : service_.dataset.graph.neighbors(*node)) {
    neighbors.push_back(artist_json(service_.store, nb));
  }
  j["degree"] = neighbors.size();
  j["neighbors"] = std::move(neighbors);
  return ok(j);
}

ApiResponse ApiService::recommend_for(const std::string& key,
                                      const std::map<std::string, std::string>& params) const {
  std::size_t k = 5;
  if (const auto it = params.find("k"); it != params.end()) {
    const auto v = parse_count(it->second);
    if (!v || *v == 0) return error(400, "k must be a positive integer");
    k = *v;
  }
  const auto node = find_node(key);
  if (!node) return error(404, "unknown artist " + key);
  return ok({{"query", artist_json(service_.store, *node)},
             {"k", k},
             {"items", items_json(recommend(service_.store, *node, k))}});
}

ApiResponse ApiService::fictitious(const std::string& body) const {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    return error(400, std::string("malformed JSON: ") + e.what());
  }
  if (!req.is_object()) return error(400, "body must be a JSON object");
  FictitiousArtistSpec spec;
  std::size_t k = 5;
  try {
    spec.name = req.value("name", std::string("fictitious artist"));
    if (!req.contains("members") || !req["members"].is_array()) {
      return error(400, "members must be an array of artist indices");
    }
    for (const auto& m : req["members"]) {
      if (!m.is_number_integer() || m.get<long long>() < 0) {
        return error(400, "members must be non-negative integers");
      }
      spec.members.push_back(m.get<NodeId>());
    }
    if (req.contains("k")) {
      if (!req["k"].is_number_integer() || req["k"].get<long long>() < 1) {
        return error(400, "k must be a positive integer");
      }
      k = req["k"].get<std::size_t>();
    }
    if (req.contains("features") && !req["features"].is_null()) {
      spec.features = req["features"].get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    return error(400, std::string("bad request: ") + e.what());
  }
  FictitiousResult result;
  try {
    result = recommend_fictitious(service_.ckpt, service_.dataset, spec, k);
  } catch (const std::invalid_argument& e) {  // includes DimensionError
    return error(400, e.what());
  } catch (const std::out_of_range& e) {
    return error(400, e.what());
  }
  return ok({{"name", spec.name}, {"members", spec.members}, {"k", k},
             {"items", items_json(result.items)}});
}

ApiResponse ApiService::projection() const {
  json points = json::array();
  for (NodeId i = 0; i < projection_.rows(); ++i) {
    json p = artist_json(service_.store, i);
    p["x"] = projection_(i, 0);
    p["y"] = projection_(i, 1);
    points.push_back(std::move(p));
  }
  return ok({{"points", points}});
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  std::shared_ptr<const ApiService> api;
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(std::shared_ptr<const ApiService> api) : impl_(std::make_unique<Impl>()) {
  impl_->api = std::move(api);
  auto handler = [api = impl_->api](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> params;
    for (const auto& [k, v] : req.params) params.emplace(k, v);
    const ApiResponse r = api->handle(req.method, req.path, params, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  impl_->server.Get(R"(/api/.*)", handler);
  impl_->server.Post(R"(/api/.*)", handler);
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
}

int HttpServer::start_background(const std::string& host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port < 0) throw std::runtime_error("cannot bind " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::pair<std::string, int> parse_bind_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  const std::string host = colon == std::string::npos ? "127.0.0.1" : addr.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? addr : addr.substr(colon + 1);
  const auto port = parse_count(port_text);
  if (!port || *port > 65535) throw std::invalid_argument("bad bind address '" + addr + "'");
  return {host.empty() ? "127.0.0.1" : host, static_cast<int>(*port)};
}

}  // namespace gatsy
