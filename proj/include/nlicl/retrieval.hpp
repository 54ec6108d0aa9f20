#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "nlicl/corpus.hpp"
#include "nlicl/http_client.hpp"

namespace nlicl {

// Unit-norm embedding. Construction normalizes and rejects non-finite or
// zero vectors.
class EmbeddingVector {
 public:
  static EmbeddingVector normalized(std::vector<double> raw);

  std::span<const double> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  bool operator==(const EmbeddingVector&) const = default;

 private:
  explicit EmbeddingVector(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Identifies provider and configuration; stored with indexes and
  // classifiers so mismatched artifacts are rejected.
  virtual std::string tag() const = 0;
  virtual std::size_t dim() const = 0;
  // Deterministic; the result is unit-normalized. Throws ConfigError on empty
  // text, BackendError on remote failure.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

// Offline bag-of-words feature hashing: lowercased alphanumeric tokens (bytes
// >= 0x80 count as token characters), each hashed to one of `dim` buckets
// with a +/-1 sign.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dim = 256);

  std::string tag() const override;
  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(std::string_view text) const override;

  static std::vector<std::string> tokenize(std::string_view text);
  std::size_t bucket(std::string_view token) const;
  // Unnormalized signed counts.
  std::vector<double> raw(std::string_view text) const;

 private:
  std::size_t dim_;
};

struct RemoteEmbedderOptions {
  HttpOptions http;
  std::string model;
  std::size_t dim = 0;  // expected embedding width; required
};

// POST {endpoint}/v1/embeddings {model, input} -> data[0].embedding.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(RemoteEmbedderOptions options);

  std::string tag() const override;
  std::size_t dim() const override { return options_.dim; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  RemoteEmbedderOptions options_;
  JsonHttpClient client_;
};

EmbeddingVector embed(const EmbeddingProvider& provider, std::string_view text);

// Row-major matrix of unit vectors aligned with example ids. Search is exact.
class EmbeddingIndex {
 public:
  EmbeddingIndex(std::string provider_tag, std::size_t dim, std::vector<std::string> ids,
                 std::vector<double> vectors);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& provider_tag() const { return provider_tag_; }
  std::span<const std::string> ids() const { return ids_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(vectors_).subspan(i * dim_, dim_);
  }
  std::vector<double> similarities(const EmbeddingVector& query) const;

  // The n most similar ids, excluding `exclude`, ordered by ASCENDING
  // similarity (most similar last). Ties rank by ascending id.
  std::vector<std::string> top_k(const EmbeddingVector& query, std::size_t n,
                                 const std::unordered_set<std::string>& exclude = {}) const;

  // Binary format: magic "NLICLIDX", u32 version, u32 tag length, tag,
  // u64 dim, u64 count, count x (u32 length, id bytes), count*dim f64.
  // All integers and floats little-endian.
  void save(const std::filesystem::path& path) const;
  static EmbeddingIndex load(const std::filesystem::path& path);

  bool operator==(const EmbeddingIndex&) const = default;

 private:
  std::string provider_tag_;
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<double> vectors_;
};

// Embeds the label-free render of every example, in dataset order.
EmbeddingIndex build_index(const Dataset& dataset, const EmbeddingProvider& provider);

std::vector<std::string> retrieve_topk(const EmbeddingIndex& index, const EmbeddingProvider& provider,
                                       std::string_view query_text, std::size_t n,
                                       const std::unordered_set<std::string>& exclude = {});

// Demonstration order handed to prompt assembly.
enum class DemoOrder {
  kAscending,   // most similar last, adjacent to the query
  kDescending,  // most similar first
};
DemoOrder parse_demo_order(std::string_view name);
std::string_view demo_order_name(DemoOrder order);

// Extension point: any function from a query to demonstration ids. Ids are
// returned in prompt order.
using Retriever = std::function<std::vector<std::string>(
    const Example& query, std::size_t n, const std::unordered_set<std::string>& exclude)>;

Retriever topk_retriever(std::shared_ptr<const EmbeddingIndex> index,
                         std::shared_ptr<const EmbeddingProvider> provider,
                         std::shared_ptr<const TaskTemplate> task, DemoOrder order = DemoOrder::kAscending);

}  // namespace nlicl
