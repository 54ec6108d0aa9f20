#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlicl/http_client.hpp"

namespace nlicl {

// A frozen language model seen through two calls. Implementations must be
// safe for concurrent use.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  // Log-likelihood of `continuation` given `prompt`; higher is more likely.
  virtual double score(std::string_view prompt, std::string_view continuation) const = 0;
  // Deterministic (temperature 0) completion, cut at the first stop string.
  virtual std::string generate(std::string_view prompt, std::size_t max_tokens,
                               std::span<const std::string> stop) const = 0;
};

struct HttpBackendOptions {
  HttpOptions http;
  std::string model;
  // Prompts (with continuation) longer than this are rejected instead of
  // being truncated by the server; 0 disables the check.
  std::size_t max_prompt_chars = 0;
};

// OpenAI-style completions client: POST {endpoint}/v1/completions.
// score() echoes prompt + continuation with max_tokens 0 and sums the token
// log-probabilities that cover the continuation.
class HttpBackend final : public ModelBackend {
 public:
  explicit HttpBackend(HttpBackendOptions options);

  double score(std::string_view prompt, std::string_view continuation) const override;
  std::string generate(std::string_view prompt, std::size_t max_tokens,
                       std::span<const std::string> stop) const override;

  // Sums log-probabilities of tokens starting in [prompt_bytes, total_bytes).
  // Throws BackendError when logprobs are missing or no token starts exactly
  // at prompt_bytes.
  static double continuation_logprob(const nlohmann::json& response, std::size_t prompt_bytes,
                                     std::size_t total_bytes);

 private:
  void check_length(std::size_t chars) const;

  HttpBackendOptions options_;
  JsonHttpClient client_;
};

// score = deterministic value in [-10, 0) from a 64-bit hash of
// (prompt, continuation); generate returns a fixed string.
class HashMockBackend final : public ModelBackend {
 public:
  explicit HashMockBackend(std::string fixed_output = "") : fixed_(std::move(fixed_output)) {}
  double score(std::string_view prompt, std::string_view continuation) const override;
  std::string generate(std::string_view prompt, std::size_t max_tokens,
                       std::span<const std::string> stop) const override;

 private:
  std::string fixed_;
};

std::shared_ptr<const ModelBackend> hash_mock(std::string fixed_output = "");

}  // namespace nlicl
