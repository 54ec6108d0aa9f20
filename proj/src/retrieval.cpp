#include "nlicl/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nlicl/error.hpp"
#include "nlicl/kernels.hpp"
#include "nlicl/random.hpp"

namespace nlicl {

static_assert(std::endian::native == std::endian::little, "index files assume a little-endian host");

EmbeddingVector EmbeddingVector::normalized(std::vector<double> raw) {
  if (raw.empty()) throw ConfigError("embedding has zero dimensions");
  for (double v : raw) {
    if (!std::isfinite(v)) throw DataError("embedding contains a non-finite value");
  }
  const double norm = std::sqrt(kernels::sum_squares(raw));
  if (!(norm > 0.0)) throw DataError("embedding has zero norm");
  for (double& v : raw) v /= norm;
  return EmbeddingVector(std::move(raw));
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw ConfigError("hashing embedder needs dim > 0");
}

std::string HashingEmbedder::tag() const { return "hashing-bow-v1/" + std::to_string(dim_); }

std::vector<std::string> HashingEmbedder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::size_t HashingEmbedder::bucket(std::string_view token) const {
  return static_cast<std::size_t>(mix64(fnv1a64(token)) % dim_);
}

std::vector<double> HashingEmbedder::raw(std::string_view text) const {
  std::vector<double> v(dim_, 0.0);
  for (const auto& tok : tokenize(text)) {
    const std::uint64_t h = mix64(fnv1a64(tok));
    v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
  }
  return v;
}

EmbeddingVector HashingEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw ConfigError("cannot embed empty text");
  auto v = raw(text);
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
    throw DataError("text has no hashable tokens: '" + std::string(text.substr(0, 80)) + "'");
  }
  return EmbeddingVector::normalized(std::move(v));
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderOptions options)
    : options_(std::move(options)), client_(options_.http) {
  if (options_.dim == 0) throw ConfigError("remote embedder requires an explicit dim");
  if (options_.model.empty()) throw ConfigError("remote embedder requires a model name");
}

std::string RemoteEmbedder::tag() const {
  return "remote:" + options_.model + "/" + std::to_string(options_.dim);
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw ConfigError("cannot embed empty text");
  const nlohmann::json body = {{"model", options_.model}, {"input", std::string(text)}};
  const auto res = client_.post("/v1/embeddings", body);
  std::vector<double> values;
  try {
    values = res.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("embedding response from " + client_.endpoint() + " lacks data[0].embedding: " + e.what(),
                       false);
  }
  if (values.size() != options_.dim) {
    throw BackendError("embedding from " + client_.endpoint() + " has dim " + std::to_string(values.size()) +
                           ", expected " + std::to_string(options_.dim),
                       false);
  }
  return EmbeddingVector::normalized(std::move(values));
}

EmbeddingVector embed(const EmbeddingProvider& provider, std::string_view text) {
  auto v = provider.embed(text);
  if (v.dim() != provider.dim()) throw DataError("provider returned a vector of unexpected width");
  return v;
}

EmbeddingIndex::EmbeddingIndex(std::string provider_tag, std::size_t dim, std::vector<std::string> ids,
                               std::vector<double> vectors)
    : provider_tag_(std::move(provider_tag)), dim_(dim), ids_(std::move(ids)), vectors_(std::move(vectors)) {
  if (dim_ == 0) throw DataError("index dim must be positive");
  if (vectors_.size() != ids_.size() * dim_) {
    throw DataError("index has " + std::to_string(ids_.size()) + " ids but " + std::to_string(vectors_.size()) +
                    " values for dim " + std::to_string(dim_));
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw DataError("duplicate id '" + id + "' in index");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const auto r = row(i);
    if (!std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); }) ||
        std::abs(std::sqrt(kernels::sum_squares(r)) - 1.0) > 1e-6) {
      throw DataError("index vector for '" + ids_[i] + "' is not a finite unit vector");
    }
  }
}

std::vector<double> EmbeddingIndex::similarities(const EmbeddingVector& query) const {
  if (query.dim() != dim_) {
    throw ConfigError("query dim " + std::to_string(query.dim()) + " does not match index dim " +
                      std::to_string(dim_));
  }
  std::vector<double> sims(ids_.size());
  kernels::gemv(vectors_, query.values(), sims);
  return sims;
}

std::vector<std::string> EmbeddingIndex::top_k(const EmbeddingVector& query, std::size_t n,
                                               const std::unordered_set<std::string>& exclude) const {
  if (ids_.empty()) throw ConfigError("cannot retrieve from an empty index");
  const auto sims = similarities(query);
  std::vector<std::size_t> pool;
  pool.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!exclude.contains(ids_[i])) pool.push_back(i);
  }
  if (n < 1 || n > pool.size()) {
    throw ConfigError("cannot retrieve " + std::to_string(n) + " demonstrations from " +
                      std::to_string(pool.size()) + " candidates");
  }
  auto better = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return ids_[a] < ids_[b];
  };
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n), pool.end(), better);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t k = n; k-- > 0;) out.push_back(ids_[pool[k]]);
  return out;
}

namespace {

constexpr char kMagic[8] = {'N', 'L', 'I', 'C', 'L', 'I', 'D', 'X'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& where) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError(where + ": truncated index file");
  return v;
}

std::string get_string(std::istream& in, std::size_t len, const std::string& where) {
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), static_cast<std::streamsize>(len))) {
    throw DataError(where + ": truncated index file");
  }
  return s;
}

}  // namespace

void EmbeddingIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write index '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(provider_tag_.size()));
  out.write(provider_tag_.data(), static_cast<std::streamsize>(provider_tag_.size()));
  put<std::uint64_t>(out, dim_);
  put<std::uint64_t>(out, ids_.size());
  for (const auto& id : ids_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  out.write(reinterpret_cast<const char*>(vectors_.data()),
            static_cast<std::streamsize>(vectors_.size() * sizeof(double)));
  if (!out) throw DataError("failed writing index '" + path.string() + "'");
}

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open index '" + where + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError(where + ": not an index file");
  }
  if (const auto v = get<std::uint32_t>(in, where); v != kVersion) {
    throw DataError(where + ": unsupported index version " + std::to_string(v));
  }
  auto tag = get_string(in, get<std::uint32_t>(in, where), where);
  const auto dim = get<std::uint64_t>(in, where);
  const auto count = get<std::uint64_t>(in, where);
  if (dim == 0 || dim > (1u << 20)) throw DataError(where + ": implausible dim " + std::to_string(dim));
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) ids.push_back(get_string(in, get<std::uint32_t>(in, where), where));
  std::vector<double> vectors(count * dim);
  if (!vectors.empty() &&
      !in.read(reinterpret_cast<char*>(vectors.data()), static_cast<std::streamsize>(vectors.size() * sizeof(double)))) {
    throw DataError(where + ": truncated vector block (expected " + std::to_string(count) + " x " +
                    std::to_string(dim) + ")");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(where + ": trailing bytes after vectors");
  return EmbeddingIndex(std::move(tag), dim, std::move(ids), std::move(vectors));
}

EmbeddingIndex build_index(const Dataset& dataset, const EmbeddingProvider& provider) {
  if (dataset.empty()) throw ConfigError("cannot index an empty dataset");
  std::vector<std::string> ids;
  std::vector<double> vectors;
  ids.reserve(dataset.size());
  vectors.reserve(dataset.size() * provider.dim());
  for (const auto& ex : dataset.examples()) {
    const auto v = embed(provider, dataset.task().render_unlabeled(ex));
    ids.push_back(ex.id);
    vectors.insert(vectors.end(), v.values().begin(), v.values().end());
  }
  return EmbeddingIndex(provider.tag(), provider.dim(), std::move(ids), std::move(vectors));
}

std::vector<std::string> retrieve_topk(const EmbeddingIndex& index, const EmbeddingProvider& provider,
                                       std::string_view query_text, std::size_t n,
                                       const std::unordered_set<std::string>& exclude) {
  if (provider.tag() != index.provider_tag()) {
    throw ConfigError("provider '" + provider.tag() + "' does not match index provider '" +
                      index.provider_tag() + "'");
  }
  return index.top_k(embed(provider, query_text), n, exclude);
}

DemoOrder parse_demo_order(std::string_view name) {
  if (name == "ascending") return DemoOrder::kAscending;
  // Retrieval-score order lists the best match first.
  if (name == "descending" || name == "retrieval-score") return DemoOrder::kDescending;
  throw ConfigError("unknown demonstration order '" + std::string(name) + "'");
}

std::string_view demo_order_name(DemoOrder order) {
  return order == DemoOrder::kAscending ? "ascending" : "descending";
}

Retriever topk_retriever(std::shared_ptr<const EmbeddingIndex> index,
                         std::shared_ptr<const EmbeddingProvider> provider,
                         std::shared_ptr<const TaskTemplate> task, DemoOrder order) {
  return [index = std::move(index), provider = std::move(provider), task = std::move(task), order](
             const Example& query, std::size_t n, const std::unordered_set<std::string>& exclude) {
    if (n == 0) return std::vector<std::string>{};
    auto ids = retrieve_topk(*index, *provider, task->render_unlabeled(query), n, exclude);
    if (order == DemoOrder::kDescending) std::reverse(ids.begin(), ids.end());
    return ids;
  };
}

}  // namespace nlicl
