#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>

#include "nlicl/error.hpp"
#include "nlicl/kernels.hpp"
#include "nlicl/retrieval.hpp"
#include "support/synthetic.hpp"

using namespace nlicl;

namespace {

// Maps fixed texts to fixed raw vectors; lets tests drive retrieve_topk with
// arbitrary geometry.
class TableProvider final : public EmbeddingProvider {
 public:
  TableProvider(std::size_t dim, double scale = 1.0) : dim_(dim), scale_(scale) {}
  void put(std::string text, std::vector<double> v) { table_[std::move(text)] = std::move(v); }
  std::string tag() const override { return "table/" + std::to_string(dim_); }
  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(std::string_view text) const override {
    auto v = table_.at(std::string(text));
    for (auto& x : v) x *= scale_;
    return EmbeddingVector::normalized(std::move(v));
  }

 private:
  std::size_t dim_;
  double scale_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

struct RandomWorld {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> vectors;  // raw
  std::vector<std::vector<double>> queries;  // raw
};

RandomWorld random_world(std::size_t count, std::size_t queries, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist;
  RandomWorld w;
  auto draw = [&] {
    std::vector<double> v(dim);
    for (auto& x : v) x = dist(gen);
    return v;
  };
  for (std::size_t i = 0; i < count; ++i) {
    w.ids.push_back("v" + std::to_string(1000 + i));
    w.vectors.push_back(draw());
  }
  for (std::size_t i = 0; i < queries; ++i) w.queries.push_back(draw());
  return w;
}

std::vector<double> unit(const std::vector<double>& v) {
  long double ss = 0;
  for (double x : v) ss += static_cast<long double>(x) * x;
  std::vector<double> out(v);
  for (auto& x : out) x = static_cast<double>(x / std::sqrt(ss));
  return out;
}

// Brute force: cosine with every row, full stable sort, take n, flip to
// ascending similarity.
std::vector<std::string> oracle_topk(const RandomWorld& w, const std::vector<double>& query, std::size_t n,
                                     const std::unordered_set<std::string>& exclude = {}) {
  const auto q = unit(query);
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t i = 0; i < w.ids.size(); ++i) {
    if (exclude.count(w.ids[i])) continue;
    const auto r = unit(w.vectors[i]);
    long double s = 0;
    for (std::size_t d = 0; d < q.size(); ++d) s += static_cast<long double>(q[d]) * r[d];
    all.emplace_back(static_cast<double>(s), w.ids[i]);
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(all[i].second);
  std::reverse(out.begin(), out.end());
  return out;
}

std::pair<EmbeddingIndex, std::shared_ptr<TableProvider>> index_for(const RandomWorld& w, double scale = 1.0) {
  const std::size_t dim = w.vectors.front().size();
  auto provider = std::make_shared<TableProvider>(dim, scale);
  std::vector<double> flat;
  for (std::size_t i = 0; i < w.ids.size(); ++i) {
    provider->put(w.ids[i], w.vectors[i]);
    const auto v = provider->embed(w.ids[i]);
    flat.insert(flat.end(), v.values().begin(), v.values().end());
  }
  for (std::size_t i = 0; i < w.queries.size(); ++i) provider->put("q" + std::to_string(i), w.queries[i]);
  return {EmbeddingIndex(provider->tag(), dim, w.ids, std::move(flat)), provider};
}

}  // namespace

TEST(EmbeddingVector, NormalizesAndValidates) {
  const auto v = EmbeddingVector::normalized({3.0, 4.0});
  EXPECT_DOUBLE_EQ(v.values()[0], 0.6);
  EXPECT_DOUBLE_EQ(v.values()[1], 0.8);
  EXPECT_THROW(EmbeddingVector::normalized({0.0, 0.0}), DataError);
  EXPECT_THROW(EmbeddingVector::normalized({1.0, NAN}), DataError);
  EXPECT_THROW(EmbeddingVector::normalized({}), ConfigError);
}

TEST(HashingEmbedder, DeterministicUnitAndOrderFree) {
  HashingEmbedder e;
  EXPECT_EQ(e.dim(), 256u);
  const auto a = e.embed("a b");
  EXPECT_EQ(a, e.embed("a b"));
  EXPECT_EQ(a, e.embed("b a"));
  EXPECT_EQ(a, e.embed("B,  A!"));
  double ss = 0;
  for (double x : a.values()) ss += x * x;
  EXPECT_NEAR(ss, 1.0, 1e-12);
  EXPECT_THROW(e.embed(""), ConfigError);
  EXPECT_THROW(e.embed("!!! ..."), DataError);
}

TEST(HashingEmbedder, Tokenization) {
  EXPECT_EQ(HashingEmbedder::tokenize("Hello, World-2x!"), (std::vector<std::string>{"hello", "world", "2x"}));
  EXPECT_EQ(HashingEmbedder::tokenize("caf\xc3\xa9 ok"), (std::vector<std::string>{"caf\xc3\xa9", "ok"}));
}

TEST(HashingEmbedder, DisjointVocabularyIsOrthogonal) {
  HashingEmbedder e;
  const std::vector<std::string> left{"apple", "river", "stone"};
  std::vector<std::string> right;
  std::set<std::size_t> used;
  for (const auto& w : left) used.insert(e.bucket(w));
  // Build a collision-free right-hand vocabulary.
  for (const char* w : {"violet", "engine", "harbor", "tiger", "planet", "copper", "ladder", "meadow"}) {
    if (right.size() < 3 && !used.count(e.bucket(w))) right.push_back(w);
  }
  ASSERT_EQ(right.size(), 3u);
  const auto a = e.embed(left[0] + " " + left[1] + " " + left[2]);
  const auto b = e.embed(right[0] + " " + right[1] + " " + right[2]);
  EXPECT_EQ(kernels::dot(a.values(), b.values()), 0.0);
}

TEST(Index, TopKMatchesBruteForce) {
  const auto w = random_world(200, 50, 256, 17);
  auto [index, provider] = index_for(w);
  for (std::size_t q = 0; q < w.queries.size(); ++q) {
    EXPECT_EQ(retrieve_topk(index, *provider, "q" + std::to_string(q), 10), oracle_topk(w, w.queries[q], 10)) << q;
  }
}

TEST(Index, ExclusionHonoured) {
  const auto w = random_world(60, 10, 16, 5);
  auto [index, provider] = index_for(w);
  for (std::size_t q = 0; q < w.queries.size(); ++q) {
    const auto best = retrieve_topk(index, *provider, "q" + std::to_string(q), 5);
    std::unordered_set<std::string> exclude(best.begin(), best.end());
    const auto next = retrieve_topk(index, *provider, "q" + std::to_string(q), 5, exclude);
    for (const auto& id : next) EXPECT_FALSE(exclude.count(id));
    EXPECT_EQ(next, oracle_topk(w, w.queries[q], 5, exclude));
  }
}

TEST(Index, ScaleInvariance) {
  const auto w = random_world(80, 10, 32, 8);
  auto [a, pa] = index_for(w, 1.0);
  auto [b, pb] = index_for(w, 37.5);
  for (std::size_t q = 0; q < w.queries.size(); ++q) {
    const auto name = "q" + std::to_string(q);
    EXPECT_EQ(retrieve_topk(a, *pa, name, 7), retrieve_topk(b, *pb, name, 7));
  }
}

TEST(Index, TiesBreakByAscendingId) {
  // Four identical vectors; the lowest ids are the "most similar".
  const std::vector<std::string> ids{"d", "b", "a", "c"};
  std::vector<double> flat;
  for (int i = 0; i < 4; ++i) flat.insert(flat.end(), {1.0, 0.0});
  EmbeddingIndex index("t", 2, ids, flat);
  EXPECT_EQ(index.top_k(EmbeddingVector::normalized({1.0, 0.0}), 3), (std::vector<std::string>{"c", "b", "a"}));
}

TEST(Index, ExhaustiveAndSelfSimilarity) {
  const auto ds = nlicl::testing::synthetic_dataset(TaskTemplate::sst5(), 30, 2, "s");
  HashingEmbedder e;
  const auto index = build_index(ds, e);
  EXPECT_EQ(index.size(), 30u);
  EXPECT_EQ(index, build_index(ds, e));

  auto all = retrieve_topk(index, e, "anything at all", 30);
  std::sort(all.begin(), all.end());
  std::vector<std::string> ids;
  for (const auto& ex : ds.examples()) ids.push_back(ex.id);
  EXPECT_EQ(all, ids);

  const auto text = ds.task().render_unlabeled(ds[7]);
  EXPECT_EQ(retrieve_topk(index, e, text, 5).back(), ds[7].id);

  const auto one = build_index(ds.with_examples({ds[0]}), e);
  EXPECT_EQ(one.size(), 1u);
}

TEST(Index, Errors) {
  const auto ds = nlicl::testing::synthetic_dataset(TaskTemplate::sst5(), 5, 2, "s");
  HashingEmbedder e;
  const auto index = build_index(ds, e);
  EXPECT_THROW(retrieve_topk(index, e, "x", 6), ConfigError);
  EXPECT_THROW(retrieve_topk(index, e, "x", 5, {ds[0].id}), ConfigError);
  EXPECT_THROW(retrieve_topk(index, HashingEmbedder(64), "x", 1), ConfigError);
  EXPECT_THROW(build_index(ds.with_examples({}), e), ConfigError);
  EXPECT_THROW(EmbeddingIndex("t", 2, {"a", "a"}, {1, 0, 0, 1}), DataError);
  EXPECT_THROW(EmbeddingIndex("t", 2, {"a"}, {1, 0, 0, 1}), DataError);
  EXPECT_THROW(EmbeddingIndex("t", 2, {"a"}, {2, 0}), DataError);
  EmbeddingIndex empty("t", 2, {}, {});
  EXPECT_THROW(empty.top_k(EmbeddingVector::normalized({1, 0}), 1), ConfigError);
}

TEST(Index, SaveLoadRoundTripAndCorruption) {
  const auto ds = nlicl::testing::synthetic_dataset(TaskTemplate::mrpc(), 20, 3, "m");
  HashingEmbedder e(64);
  const auto index = build_index(ds, e);
  const auto dir = std::filesystem::temp_directory_path() / "nlicl_index_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "index.bin";
  index.save(path);
  EXPECT_EQ(EmbeddingIndex::load(path), index);

  std::string bytes = nlicl::testing::read_file(path.string());
  auto write = [&](const std::string& name, const std::string& b) {
    std::ofstream(dir / name, std::ios::binary) << b;
    return dir / name;
  };
  EXPECT_THROW(EmbeddingIndex::load(write("trunc.bin", bytes.substr(0, bytes.size() - 8))), DataError);
  EXPECT_THROW(EmbeddingIndex::load(write("trail.bin", bytes + "x")), DataError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(EmbeddingIndex::load(write("magic.bin", bad_magic)), DataError);
  EXPECT_THROW(EmbeddingIndex::load(dir / "missing.bin"), DataError);
}

TEST(Retriever, OrderOption) {
  const auto ds = nlicl::testing::synthetic_dataset(TaskTemplate::sst5(), 25, 6, "s");
  auto provider = std::make_shared<HashingEmbedder>();
  auto index = std::make_shared<const EmbeddingIndex>(build_index(ds, *provider));
  auto task = ds.task_ptr();
  const auto asc = topk_retriever(index, provider, task, DemoOrder::kAscending)(ds[3], 6, {ds[3].id});
  const auto desc = topk_retriever(index, provider, task, parse_demo_order("descending"))(ds[3], 6, {ds[3].id});
  EXPECT_EQ(asc, retrieve_topk(*index, *provider, task->render_unlabeled(ds[3]), 6, {ds[3].id}));
  EXPECT_EQ(std::vector<std::string>(asc.rbegin(), asc.rend()), desc);
  EXPECT_EQ(topk_retriever(index, provider, task)(ds[3], 0, {}).size(), 0u);
  EXPECT_EQ(parse_demo_order("retrieval-score"), DemoOrder::kDescending);
  EXPECT_THROW(parse_demo_order("random"), ConfigError);
}
