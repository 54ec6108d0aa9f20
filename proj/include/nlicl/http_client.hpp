#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include <json.hpp>

namespace nlicl {

enum class CassetteMode { kOff, kRecord, kReplay, kAuto };

CassetteMode parse_cassette_mode(std::string_view name);

// Request-hash -> raw response body store for offline replay of HTTP calls.
// The key covers the request path and the canonical (sorted-key) JSON body;
// bearer tokens are never part of it.
class Cassette {
 public:
  Cassette(std::filesystem::path path, CassetteMode mode);

  CassetteMode mode() const { return mode_; }
  static std::string key(std::string_view path, const nlohmann::json& body);
  std::optional<std::string> lookup(const std::string& key) const;
  // Stores and immediately persists the file.
  void store(const std::string& key, const nlohmann::json& request, const std::string& response);
  std::size_t size() const;

 private:
  void save_locked() const;

  std::filesystem::path path_;
  CassetteMode mode_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> entries_;
};

struct HttpOptions {
  // Base URL, e.g. "http://127.0.0.1:8000" or "https://host/prefix".
  std::string endpoint;
  // Name of the environment variable holding a bearer token; empty for none.
  std::string auth_env;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{120};
  int max_in_flight = 8;
  std::shared_ptr<Cassette> cassette;
};

// POSTs JSON bodies and returns parsed JSON responses. Retries transport
// failures, 429 and 5xx with exponential backoff; other statuses fail
// immediately. Safe for concurrent use.
class JsonHttpClient {
 public:
  explicit JsonHttpClient(HttpOptions options);

  nlohmann::json post(std::string_view path, const nlohmann::json& body) const;
  const std::string& endpoint() const { return options_.endpoint; }

 private:
  std::string post_raw(const std::string& path, const std::string& body) const;

  HttpOptions options_;
  std::string origin_;     // scheme://host[:port]
  std::string base_path_;  // path prefix without trailing '/'
  std::string bearer_;
  std::unique_ptr<std::counting_semaphore<1024>> in_flight_;
};

}  // namespace nlicl
