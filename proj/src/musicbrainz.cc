#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "gatsy/genre.h"

namespace gatsy {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kNotFoundBody = R"({"genres":[],"tags":[]})";

std::vector<GenreTag> parse_tag_array(const json& array, const std::string& artist_id) {
  std::vector<GenreTag> tags;
  if (!array.is_array()) throw ParseError(artist_id + ": tag list is not an array");
  for (const auto& entry : array) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
      throw ParseError(artist_id + ": tag entry without a name");
    }
    GenreTag tag;
    tag.name = entry["name"].get<std::string>();
    if (entry.contains("count")) {
      if (!entry["count"].is_number_integer()) throw ParseError(artist_id + ": non-integer count");
      tag.votes = entry["count"].get<std::int64_t>();
      if (tag.votes < 0) throw ParseError(artist_id + ": negative vote count");
    }
    tags.push_back(std::move(tag));
  }
  return tags;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const fs::path& path, const std::string& body) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << body;
  }
  fs::rename(tmp, path);
}

std::string expand_path(const std::string& tmpl, const std::string& id) {
  std::string out = tmpl;
  const std::string key = "{id}";
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + id.size())) {
    out.replace(pos, key.size(), id);
  }
  return out;
}

enum class FetchStatus { kOk, kNotFound, kFailed };

FetchStatus fetch_one(httplib::Client& client, const std::string& path, const FetchOptions& options,
                      RateLimiter& limiter, std::string& body) {
  for (int attempt = 0; attempt < std::max(1, options.max_attempts); ++attempt) {
    limiter.acquire();
    const auto res = client.Get(path);
    if (!res) {
      std::cerr << "warning: request " << path << " failed: " << httplib::to_string(res.error())
                << "\n";
      continue;
    }
    if (res->status == 200) {
      body = res->body;
      return FetchStatus::kOk;
    }
    if (res->status == 404) return FetchStatus::kNotFound;
    std::cerr << "warning: request " << path << " returned HTTP " << res->status << "\n";
    if (res->status >= 400 && res->status < 500 && res->status != 429) break;
  }
  return FetchStatus::kFailed;
}

}  // namespace

MusicBrainzRecord parse_musicbrainz_json(const std::string& artist_id, const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw ParseError(artist_id + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError(artist_id + ": document is not an object");
  MusicBrainzRecord record;
  record.artist_id = artist_id;
  if (doc.contains("genres")) record.tags = parse_tag_array(doc["genres"], artist_id);
  if (record.tags.empty() && doc.contains("tags")) {
    record.tags = parse_tag_array(doc["tags"], artist_id);
  }
  return record;
}

void RateLimiter::acquire() {
  const auto now = std::chrono::steady_clock::now();
  if (!first_ && now < last_ + min_interval_) {
    std::this_thread::sleep_until(last_ + min_interval_);
  }
  first_ = false;
  last_ = std::chrono::steady_clock::now();
}

std::string cache_file_name(const std::string& artist_id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : artist_id) {
    if (std::isalnum(c) || c == '-' || c == '_' || (c == '.' && !out.empty())) {
      out.push_back(static_cast<char>(c));
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out + ".json";
}

std::vector<MusicBrainzRecord> fetch_genres(const std::vector<std::string>& ids,
                                            const fs::path& cache_dir, const FetchOptions& options,
                                            FetchReport* report) {
  FetchReport local;
  FetchReport& rep = report != nullptr ? *report : local;
  fs::create_directories(cache_dir);
  RateLimiter limiter(options.min_interval);
  std::unique_ptr<httplib::Client> client;

  std::vector<MusicBrainzRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const fs::path cached = cache_dir / cache_file_name(id);
    if (fs::exists(cached)) {
      try {
        out.push_back(parse_musicbrainz_json(id, read_file(cached)));
        ++rep.cache_hits;
        continue;
      } catch (const ParseError& e) {
        ++rep.corrupt_cache;
        std::cerr << "warning: corrupt cache entry " << cached << " (" << e.what() << ")\n";
      }
    }
    if (options.offline) {
      ++rep.missing_offline;
      out.push_back(MusicBrainzRecord{id, {}});
      continue;
    }
    if (!client) {
      client = std::make_unique<httplib::Client>(options.base_url);
      client->set_connection_timeout(options.timeout);
      client->set_read_timeout(options.timeout);
      client->set_default_headers({{"User-Agent", options.user_agent},
                                   {"Accept", "application/json"}});
    }
    std::string body;
    switch (fetch_one(*client, expand_path(options.path_template, id), options, limiter, body)) {
      case FetchStatus::kOk:
        try {
          out.push_back(parse_musicbrainz_json(id, body));
          write_file_atomic(cached, body);
          ++rep.fetched;
        } catch (const ParseError& e) {
          std::cerr << "warning: unusable response for " << id << " (" << e.what() << ")\n";
          out.push_back(MusicBrainzRecord{id, {}});
          ++rep.failed;
        }
        break;
      case FetchStatus::kNotFound:
        write_file_atomic(cached, kNotFoundBody);
        out.push_back(MusicBrainzRecord{id, {}});
        ++rep.not_found;
        break;
      case FetchStatus::kFailed:
        out.push_back(MusicBrainzRecord{id, {}});
        ++rep.failed;
        break;
    }
  }
  return out;
}

}  // namespace gatsy
