#include "nlicl/http_client.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "nlicl/error.hpp"
#include "nlicl/random.hpp"

namespace nlicl {

CassetteMode parse_cassette_mode(std::string_view name) {
  if (name == "off" || name.empty()) return CassetteMode::kOff;
  if (name == "record") return CassetteMode::kRecord;
  if (name == "replay") return CassetteMode::kReplay;
  if (name == "auto") return CassetteMode::kAuto;
  throw ConfigError("unknown cassette mode '" + std::string(name) + "'");
}

Cassette::Cassette(std::filesystem::path path, CassetteMode mode) : path_(std::move(path)), mode_(mode) {
  if (mode_ == CassetteMode::kOff) return;
  std::ifstream in(path_);
  if (!in) {
    if (mode_ == CassetteMode::kReplay) {
      throw ConfigError("cassette '" + path_.string() + "' not found (replay mode)");
    }
    return;
  }
  try {
    nlohmann::json j;
    in >> j;
    for (auto& [k, v] : j.items()) entries_.emplace(k, v);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cassette '" + path_.string() + "' is corrupt: " + e.what());
  }
}

std::string Cassette::key(std::string_view path, const nlohmann::json& body) {
  const std::string canonical = std::string(path) + "\n" + body.dump();
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << mix64(fnv1a64(canonical)) << std::setw(16)
     << fnv1a64(canonical, 0x84222325cbf29ce4ULL);
  return os.str();
}

std::optional<std::string> Cassette::lookup(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.at("response").get<std::string>();
}

void Cassette::store(const std::string& key, const nlohmann::json& request, const std::string& response) {
  std::lock_guard lock(mu_);
  entries_[key] = {{"request", request}, {"response", response}};
  save_locked();
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void Cassette::save_locked() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : entries_) j[k] = v;
  const auto tmp = path_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write cassette '" + path_.string() + "'");
    out << j.dump(1) << '\n';
  }
  std::filesystem::rename(tmp, path_);
}

JsonHttpClient::JsonHttpClient(HttpOptions options) : options_(std::move(options)) {
  const auto& url = options_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint '" + url + "' must include a scheme (http:// or https://)");
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (url.compare(0, scheme_end, "http") != 0) {
    throw ConfigError("endpoint '" + url + "': only http:// is supported in this build");
  }
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (!options_.auth_env.empty()) {
    const char* token = std::getenv(options_.auth_env.c_str());
    if (token == nullptr) {
      throw ConfigError("auth environment variable '" + options_.auth_env + "' is not set");
    }
    bearer_ = token;
  }
  if (options_.max_in_flight < 1 || options_.max_in_flight > 1024) {
    throw ConfigError("max_in_flight must lie in [1, 1024]");
  }
  in_flight_ = std::make_unique<std::counting_semaphore<1024>>(options_.max_in_flight);
}

std::string JsonHttpClient::post_raw(const std::string& path, const std::string& body) const {
  in_flight_->acquire();
  struct Release {
    std::counting_semaphore<1024>* s;
    ~Release() { s->release(); }
  } release{in_flight_.get()};

  httplib::Client client(origin_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  httplib::Headers headers;
  if (!bearer_.empty()) headers.emplace("Authorization", "Bearer " + bearer_);

  const std::string url = origin_ + path;
  auto backoff = options_.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500);
    if (res->status != 429 && res->status < 500) {
      throw BackendError("POST " + url + " failed: " + last_error, false);
    }
  }
  throw BackendError("POST " + url + " failed after " + std::to_string(options_.max_retries + 1) +
                         " attempts: " + last_error,
                     true);
}

nlohmann::json JsonHttpClient::post(std::string_view path, const nlohmann::json& body) const {
  const std::string full_path = base_path_ + std::string(path);
  const auto& cassette = options_.cassette;
  std::string key;
  std::optional<std::string> raw;
  if (cassette && cassette->mode() != CassetteMode::kOff) {
    key = Cassette::key(path, body);
    if (cassette->mode() != CassetteMode::kRecord) raw = cassette->lookup(key);
    if (!raw && cassette->mode() == CassetteMode::kReplay) {
      throw BackendError("cassette has no recording for POST " + std::string(path) + " (key " + key + ")",
                         false);
    }
  }
  if (!raw) {
    raw = post_raw(full_path, body.dump());
    if (cassette && (cassette->mode() == CassetteMode::kRecord || cassette->mode() == CassetteMode::kAuto)) {
      cassette->store(key, body, *raw);
    }
  }
  try {
    return nlohmann::json::parse(*raw);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("POST " + options_.endpoint + std::string(path) + ": response is not JSON: " + e.what(),
                       false);
  }
}

}  // namespace nlicl
