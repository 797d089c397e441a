#pragma once

#include <map>
#include <memory>
#include <string>

#include "gatsy/recommend.h"

namespace gatsy {

struct ApiResponse {
  int status = 200;
  std::string body;  // JSON
};

/// The JSON API over an immutable store. Requests never modify shared state:
/// each fictitious request augments a private copy of the graph, so
/// concurrent callers cannot observe each other's artists.
class ApiService {
 public:
  explicit ApiService(LoadedService service);

  /// `path` excludes the query string; `params` holds decoded query values.
  ApiResponse handle(const std::string& method, const std::string& path,
                     const std::map<std::string, std::string>& params,
                     const std::string& body) const;

  const EmbeddingStore& store() const { return service_.store; }

 private:
  ApiResponse artists(const std::map<std::string, std::string>& params) const;
  ApiResponse artist(const std::string& key) const;
  ApiResponse recommend_for(const std::string& key,
                            const std::map<std::string, std::string>& params) const;
  ApiResponse fictitious(const std::string& body) const;
  ApiResponse projection() const;
  ApiResponse health() const;
  /// External id first, then a decimal node index.
  std::optional<NodeId> find_node(const std::string& key) const;

  LoadedService service_;
  Tensor projection_;
};

/// HTTP front end for ApiService.
class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const ApiService> api);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and serves until stop(); blocks. Throws std::runtime_error when
  /// the address cannot be bound.
  void listen(const std::string& host, int port);
  /// Binds to a free port, returns it, and serves on a background thread.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; a bare port binds 127.0.0.1.
std::pair<std::string, int> parse_bind_address(const std::string& addr);

}  // namespace gatsy
