#include "nlicl/backend.hpp"

#include <cmath>

#include "nlicl/error.hpp"
#include "nlicl/random.hpp"

namespace nlicl {

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)), client_(options_.http) {
  if (options_.model.empty()) throw ConfigError("http backend requires a model name");
}

void HttpBackend::check_length(std::size_t chars) const {
  if (options_.max_prompt_chars > 0 && chars > options_.max_prompt_chars) {
    throw ConfigError("prompt of " + std::to_string(chars) + " characters exceeds max_prompt_chars " +
                      std::to_string(options_.max_prompt_chars));
  }
}

double HttpBackend::continuation_logprob(const nlohmann::json& response, std::size_t prompt_bytes,
                                         std::size_t total_bytes) {
  const nlohmann::json* lp = nullptr;
  try {
    lp = &response.at("choices").at(0).at("logprobs");
  } catch (const nlohmann::json::exception&) {
    throw BackendError("protocol mismatch: response has no choices[0].logprobs (server must support echo)", false);
  }
  if (!lp->is_object() || !lp->contains("tokens") || !lp->contains("token_logprobs")) {
    throw BackendError("protocol mismatch: logprobs lacks tokens/token_logprobs", false);
  }
  const auto& tokens = lp->at("tokens");
  const auto& values = lp->at("token_logprobs");
  if (!tokens.is_array() || !values.is_array() || tokens.size() != values.size()) {
    throw BackendError("protocol mismatch: tokens and token_logprobs differ in length", false);
  }
  std::vector<std::size_t> offsets;
  if (auto it = lp->find("text_offset"); it != lp->end() && it->is_array() && it->size() == tokens.size()) {
    offsets = it->get<std::vector<std::size_t>>();
  } else {
    std::size_t at = 0;
    for (const auto& t : tokens) {
      offsets.push_back(at);
      at += t.get<std::string>().size();
    }
  }
  bool aligned = false;
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (offsets[i] < prompt_bytes || offsets[i] >= total_bytes) continue;
    if (offsets[i] == prompt_bytes) aligned = true;
    if (!values[i].is_number()) {
      throw BackendError("protocol mismatch: missing log-probability for continuation token " + std::to_string(i),
                         false);
    }
    total += values[i].get<double>();
  }
  if (!aligned) {
    throw BackendError(
        "token alignment failure: no token starts at the continuation boundary (byte " +
            std::to_string(prompt_bytes) + "); score candidates with a leading separator such as ' Yes'",
        false);
  }
  if (!std::isfinite(total)) throw BackendError("non-finite continuation log-probability", false);
  return total;
}

double HttpBackend::score(std::string_view prompt, std::string_view continuation) const {
  if (continuation.empty()) return 0.0;
  std::string text(prompt);
  text += continuation;
  check_length(text.size());
  const nlohmann::json body = {{"model", options_.model}, {"prompt", text}, {"max_tokens", 0},
                               {"temperature", 0},        {"logprobs", 1},  {"echo", true}};
  return continuation_logprob(client_.post("/v1/completions", body), prompt.size(), text.size());
}

std::string HttpBackend::generate(std::string_view prompt, std::size_t max_tokens,
                                  std::span<const std::string> stop) const {
  check_length(prompt.size());
  nlohmann::json body = {{"model", options_.model}, {"prompt", std::string(prompt)}, {"max_tokens", max_tokens},
                         {"temperature", 0},        {"logprobs", 1},                 {"echo", false}};
  if (!stop.empty()) body["stop"] = std::vector<std::string>(stop.begin(), stop.end());
  const auto res = client_.post("/v1/completions", body);
  std::string text;
  try {
    text = res.at("choices").at(0).at("text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError("protocol mismatch: completion response lacks choices[0].text", false);
  }
  for (const auto& s : stop) {
    if (auto cut = text.find(s); !s.empty() && cut != std::string::npos) text.resize(cut);
  }
  return text;
}

double HashMockBackend::score(std::string_view prompt, std::string_view continuation) const {
  std::string key(prompt);
  key += '\x1f';
  key += continuation;
  const double u = unit_interval(mix64(fnv1a64(key)));
  return -10.0 + 10.0 * u;
}

std::string HashMockBackend::generate(std::string_view, std::size_t, std::span<const std::string>) const {
  return fixed_;
}

std::shared_ptr<const ModelBackend> hash_mock(std::string fixed_output) {
  return std::make_shared<HashMockBackend>(std::move(fixed_output));
}

}  // namespace nlicl
