// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "nlicl/confidence.hpp"
#include "nlicl/error.hpp"
#include "nlicl/eval.hpp"
#include "nlicl/noise.hpp"
#include "nlicl/oracle_backend.hpp"
#include "nlicl/rectifier.hpp"
#include "nlicl/retrieval.hpp"
#include "nlicl/strategies.hpp"
#include "support/synthetic.hpp"

namespace fs = std::filesystem;
using namespace nlicl;
using nlicl::testing::read_file;
using nlicl::testing::source_path;
using nlicl::testing::synthetic_dataset;

namespace {

struct Outcome {
  enum Kind { kPass, kFail, kSkip } kind = kPass;
  std::string detail;
};

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    ok_ = ok_ && ok;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  Outcome outcome() const {
    if (ok_) return {Outcome::kPass, notes_};
    std::string d;
    for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + f;
    return {Outcome::kFail, d};
  }

 private:
  bool ok_ = true;
  std::vector<std::string> failures_;
  std::string notes_;
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

TaskTemplate classes(std::size_t m) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < m; ++i) labels.push_back("c" + std::to_string(i));
  return TaskTemplate("toy", {"text"}, "{text} => {label}", LabelSpace(labels));
}

// 1. Noise model.
Outcome noise_model() {
  Check c;
  const auto ds = synthetic_dataset(classes(5), 1000, 1, "n");
  const auto first = corrupt_labels(ds, 0.3, 0);
  c.expect(first.plan.flips.size() == 300, "flip count " + std::to_string(first.plan.flips.size()));
  std::size_t counts[5][5] = {};
  std::size_t total = 0, self = 0;
  for (std::uint64_t seed = 0; total < 10000; ++seed) {
    const auto out = corrupt_labels(ds, 0.3, seed);
    c.expect(out.plan.flips.size() == 300, "flip count at seed " + std::to_string(seed));
    for (const auto& f : out.plan.flips) {
      self += f.original == f.corrupted;
      ++counts[f.original][f.corrupted];
      ++total;
    }
  }
  c.expect(self == 0, std::to_string(self) + " self-transitions");
  double worst = 0;
  for (std::size_t from = 0; from < 5; ++from) {
    std::size_t row = 0;
    for (std::size_t to = 0; to < 5; ++to) row += counts[from][to];
    for (std::size_t to = 0; to < 5; ++to) {
      if (to == from) continue;
      worst = std::max(worst, std::abs(static_cast<double>(counts[from][to]) / row - 0.25));
    }
  }
  c.expect(worst <= 0.05, "max deviation from 25% is " + fixed(worst));
  c.note(std::to_string(total) + " flips, max deviation " + fixed(100 * worst, 2) + " pts");
  return c.outcome();
}

// 2. Retrieval exactness against a brute-force sort.
class TableProvider final : public EmbeddingProvider {
 public:
  std::unordered_map<std::string, std::vector<double>> table;
  std::string tag() const override { return "table/256"; }
  std::size_t dim() const override { return 256; }
  EmbeddingVector embed(std::string_view text) const override {
    return EmbeddingVector::normalized(table.at(std::string(text)));
  }
};

Outcome retrieval_exactness() {
  Check c;
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> dist;
  auto draw = [&] {
    std::vector<double> v(256);
    for (auto& x : v) x = dist(gen);
    return v;
  };
  auto unit = [](std::vector<double> v) {
    long double ss = 0;
    for (double x : v) ss += static_cast<long double>(x) * x;
    for (auto& x : v) x = static_cast<double>(x / std::sqrt(ss));
    return v;
  };
  TableProvider provider;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::vector<double> flat;
  for (int i = 0; i < 200; ++i) {
    ids.push_back("id" + std::to_string(i));
    rows.push_back(unit(draw()));
    flat.insert(flat.end(), rows.back().begin(), rows.back().end());
  }
  const EmbeddingIndex index(provider.tag(), 256, ids, flat);
  std::size_t matches = 0;
  for (int q = 0; q < 50; ++q) {
    const auto name = "q" + std::to_string(q);
    provider.table[name] = draw();
    const auto qv = unit(provider.table[name]);
    std::vector<std::pair<double, std::string>> all;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      long double s = 0;
      for (std::size_t d = 0; d < 256; ++d) s += static_cast<long double>(qv[d]) * rows[i][d];
      all.emplace_back(static_cast<double>(s), ids[i]);
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> expected;
    for (int i = 9; i >= 0; --i) expected.push_back(all[i].second);
    const bool same = retrieve_topk(index, provider, name, 10) == expected;
    c.expect(same, "query " + std::to_string(q) + " differs from brute force");
    matches += same;
  }
  c.note(std::to_string(matches) + "/50 exact id-sequence matches");
  return c.outcome();
}

// 3. Strategy semantics with an oracle estimator.
Outcome strategy_semantics() {
  Check c;
  const auto task = TaskTemplate::mrpc();
  const auto train = synthetic_dataset(task, 1000, 3, "d");
  const auto queries = synthetic_dataset(task, 100, 4, "q");
  const auto noisy = corrupt_labels(train, 0.4, 11);
  std::unordered_map<std::string, std::size_t> truth;
  for (const auto& e : train.examples()) truth.emplace(e.id, e.label);
  OracleEstimator est(truth, 2, 0.9, 0.1);
  auto provider = std::make_shared<HashingEmbedder>();
  auto index = std::make_shared<const EmbeddingIndex>(build_index(noisy.dataset, *provider));
  const auto retriever = topk_retriever(index, provider, train.task_ptr());

  std::vector<std::vector<std::size_t>> gold, corrected;
  for (const auto& q : queries.examples()) {
    std::vector<Example> demos;
    for (const auto& id : retriever(q, 10, {})) demos.push_back(noisy.dataset.at(id));

    std::vector<std::string> uncorrupted, kept;
    for (const auto& d : demos) {
      if (!noisy.plan.find(d.id)) uncorrupted.push_back(d.id);
    }
    for (const auto& a : apply_selection(demos, est, 0.3)) kept.push_back(a.example.id);
    c.expect(kept == uncorrupted, "selection survivors differ for " + q.id);

    std::vector<std::size_t> g, p;
    const auto fixed_demos = apply_correction(demos, est);
    for (std::size_t i = 0; i < demos.size(); ++i) {
      g.push_back(train.at(demos[i].id).label);
      p.push_back(fixed_demos[i].example.label);
    }
    gold.push_back(g);
    corrected.push_back(p);

    const auto re = apply_reordering(demos, est);
    for (std::size_t i = 1; i < re.size(); ++i) {
      c.expect(*re[i - 1].confidence <= *re[i].confidence, "reordering not ascending for " + q.id);
    }

    const auto w = apply_weighting(demos, est);
    c.expect(w.size() == demos.size(), "weighting changed demo count");
    for (std::size_t i = 0; i < w.size(); ++i) {
      c.expect(strip_weighting_tag(render_demo(task, w[i])) == task.render_labeled(demos[i]),
               "weighting tag does not strip cleanly for " + demos[i].id);
    }
  }
  const double tau = rectification_accuracy(gold, corrected);
  c.expect(tau == 1.0, "correction tau " + fixed(tau));
  c.note("100 queries, correction tau " + fixed(tau));
  return c.outcome();
}

// 4. Rectification accuracy against a double-loop count.
Outcome tau_oracle() {
  Check c;
  std::mt19937_64 gen(77);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + gen() % 20, k = 1 + gen() % 10, m = 2 + gen() % 4;
    std::vector<std::vector<std::size_t>> gold(n, std::vector<std::size_t>(k)), pred(n, std::vector<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        gold[i][j] = gen() % m;
        pred[i][j] = gen() % m;
      }
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) hits += gold[i][j] == pred[i][j];
    const double expected = static_cast<double>(hits) / static_cast<double>(n * k);
    c.expect(rectification_accuracy(gold, pred) == expected, "instance " + std::to_string(t) + " mismatch");
    c.expect(rectification_accuracy(gold, gold) == 1.0, "tau(gold, gold) != 1");
  }
  c.note("100 instances exact");
  return c.outcome();
}

RunConfig oracle_config() {
  RunConfig c;
  c.task = "mrpc";
  c.n = 10;
  c.backend.kind = "oracle";
  c.backend.fidelity_base = 0.5;
  c.backend.fidelity_slope = 0.5;
  c.rectifier.backend.kind = "oracle";
  c.rectifier.backend.rectifier_fidelity = 1.0;
  c.rectifier.chunk_size = 10;
  return c;
}

Experiment oracle_experiment() {
  const auto task = TaskTemplate::mrpc();
  return Experiment::from_datasets(oracle_config(), synthetic_dataset(task, 2000, 5, "tr"),
                                   synthetic_dataset(task, 400, 6, "va"));
}

RunSettings with(StrategyKind kind, CorruptionMode mode = CorruptionMode::kRetrievalSet) {
  RunSettings s;
  s.strategy.kind = kind;
  s.mode = mode;
  s.noise_seed = 1;
  return s;
}

// 5. Accuracy-vs-noise shape under the oracle mock.
Outcome end_to_end_shape() {
  Check c;
  const auto exp = oracle_experiment();
  const std::vector<double> rates{0.0, 0.25, 0.5};
  const std::vector<double> expected{1.0, 0.875, 0.75};
  const auto none = sweep(exp, with(StrategyKind::kNone), rates);
  const auto rect = sweep(exp, with(StrategyKind::kRectification), rates);
  std::string series;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double a = none.runs[i].accuracy;
    series += (i ? "/" : "") + fixed(a, 3);
    c.expect(std::abs(a - expected[i]) <= 0.07, "none at r=" + fixed(rates[i], 2) + " is " + fixed(a));
    if (i > 0) c.expect(a < none.runs[i - 1].accuracy, "no-manipulation series not strictly decreasing");
    c.expect(std::abs(rect.runs[i].accuracy - none.runs[0].accuracy) <= 0.03,
             "rectified at r=" + fixed(rates[i], 2) + " is " + fixed(rect.runs[i].accuracy));
  }
  std::string rseries;
  for (std::size_t i = 0; i < rates.size(); ++i) rseries += (i ? "/" : "") + fixed(rect.runs[i].accuracy, 3);
  c.note("none " + series + ", rectified " + rseries);
  return c.outcome();
}

// 6. Stability direction and exact zero spread for repeated seeds.
Outcome stability_direction() {
  Check c;
  const auto exp = oracle_experiment();
  std::vector<std::uint64_t> seeds(10);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
  auto none = with(StrategyKind::kNone, CorruptionMode::kPostRetrieval);
  auto rect = with(StrategyKind::kRectification, CorruptionMode::kPostRetrieval);
  none.rate = rect.rate = 0.3;
  const auto sn = stability(exp, none, seeds);
  const auto sr = stability(exp, rect, seeds);
  c.expect(sr.std <= sn.std, "rectified std " + fixed(sr.std) + " > none std " + fixed(sn.std));
  const std::vector<std::uint64_t> same(10, 3);
  const auto repeat = stability(exp, none, same);
  c.expect(repeat.std == 0.0, "identical-seed std " + fixed(repeat.std, 10));
  // The mock's draw depends only on the query and post-retrieval flips exactly floor(r * n) demos, so every
  // seed sees s = 0.7 and the no-manipulation spread is zero too; the inequality then holds with equality.
  c.note("std none " + fixed(sn.std) + ", rectified " + fixed(sr.std) + ", repeated " + fixed(repeat.std, 1) +
         (sn.std == 0.0 ? " (equality: s is seed-independent under this mock)" : ""));
  return c.outcome();
}

// 7. Classifier gradient and separable fit.
Outcome classifier() {
  Check c;
  std::mt19937_64 gen(7);
  std::normal_distribution<double> n;
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t dim = 1 + gen() % 8, m = 2 + gen() % 3, rows = 10;
    std::vector<double> x(rows * dim), w(m * dim), b(m);
    std::vector<std::size_t> y(rows);
    for (auto& v : x) v = n(gen);
    for (auto& v : w) v = 0.5 * n(gen);
    for (auto& v : b) v = 0.5 * n(gen);
    for (auto& v : y) v = gen() % m;
    SoftmaxObjective obj(x, y, m, dim);
    std::vector<double> gw, gb;
    obj.loss_and_gradient(w, b, gw, gb);
    double diff = 0, na = 0, nn = 0;
    auto probe = [&](double& p, double analytic) {
      const double keep = p;
      p = keep + 1e-5;
      const double up = obj.loss(w, b);
      p = keep - 1e-5;
      const double down = obj.loss(w, b);
      p = keep;
      const double fd = (up - down) / 2e-5;
      diff += (fd - analytic) * (fd - analytic);
      na += analytic * analytic;
      nn += fd * fd;
    };
    for (std::size_t i = 0; i < w.size(); ++i) probe(w[i], gw[i]);
    for (std::size_t i = 0; i < b.size(); ++i) probe(b[i], gb[i]);
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    worst = std::max(worst, rel);
  }
  c.expect(worst < 1e-4, "gradient relative error " + std::to_string(worst));

  const std::vector<std::string> va{"sun", "beach", "warm", "summer", "sand", "bright"};
  const std::vector<std::string> vb{"snow", "ice", "cold", "winter", "frost", "dark"};
  std::vector<Example> ex;
  for (int i = 0; i < 20; ++i) {
    const auto& v = i % 2 ? vb : va;
    ex.push_back(Example{"e" + std::to_string(i),
                         {{"question", v[i % 6] + " " + v[(i / 2 + 1) % 6] + " " + v[(i / 3 + 3) % 6]}},
                         static_cast<std::size_t>(i % 2)});
  }
  const Dataset ds(TaskTemplate::tweet(), ex);
  HashingEmbedder e;
  const auto model = train_classifier(ds, e, TrainingOptions{200, 0.5, 0}).classifier;
  std::size_t hits = 0;
  for (const auto& d : ds.examples()) hits += predict_confidence(model, d, e, ds.task()).argmax() == d.label;
  c.expect(hits == ds.size(), "separable fixture accuracy " + std::to_string(hits) + "/20");
  std::ostringstream worst_s;
  worst_s << std::scientific << std::setprecision(2) << worst;
  c.note("worst gradient rel. error " + worst_s.str() + ", separable fit " + std::to_string(hits) + "/20");
  return c.outcome();
}

// 8. Golden prompt files.
Outcome goldens() {
  Check c;
  struct Case {
    const char* name;
    TaskTemplate task;
  };
  std::size_t compared = 0;
  for (const auto& k : {Case{"mrpc", TaskTemplate::mrpc()}, Case{"sst5", TaskTemplate::sst5()},
                        Case{"tweet", TaskTemplate::tweet()}}) {
    const auto ds = load_dataset(source_path(std::string("tests/fixtures/") + k.name + ".jsonl"), k.task);
    const std::vector<Example> demos{ds[0], ds[1]};
    c.expect(render_prompt(k.task, demos, ds[2]) ==
                 read_file(source_path(std::string("tests/golden/") + k.name + "_prompt.txt")),
             std::string(k.name) + " prompt differs from golden");
    ++compared;
  }
  const auto sst = load_dataset(source_path("tests/fixtures/sst5.jsonl"), TaskTemplate::sst5());
  const std::vector<Example> all(sst.examples().begin(), sst.examples().end());
  c.expect(build_rectifier_prompt(sst.task(), all) == read_file(source_path("tests/golden/sst5_rectifier_prompt.txt")),
           "sst5 rect-v1 prompt differs");
  const std::vector<std::size_t> labels{4, 1, 2};
  c.expect(canonical_completion(sst.task().label_space(), labels) ==
               read_file(source_path("tests/golden/sst5_rectifier_completion.txt")),
           "rect-v1 completion differs");
  const auto tw = load_dataset(source_path("tests/fixtures/tweet.jsonl"), TaskTemplate::tweet());
  const std::vector<Example> two{tw[0], tw[1]};
  c.expect(build_rectifier_prompt(tw.task(), two) == read_file(source_path("tests/golden/tweet_rectifier_prompt.txt")),
           "tweet rect-v1 prompt differs");
  c.note(std::to_string(compared + 3) + " golden files byte-identical");
  return c.outcome();
}

// 9. Chunk-size independence of rectification.
Outcome chunking() {
  Check c;
  const auto ds = synthetic_dataset(TaskTemplate::sst5(), 200, 9, "k");
  for (double rho : {1.0, 0.6}) {
    auto world = OracleWorld::from_datasets(ds.task_ptr(), {&ds});
    world.rectifier_fidelity = rho;
    OracleBackend backend(world, {});
    for (std::size_t q = 0; q < 20; ++q) {
      std::vector<Example> demos(ds.examples().begin() + q * 10, ds.examples().begin() + q * 10 + 10);
      const auto noisy = corrupt_labels(ds.with_examples(demos), 0.5, q).dataset;
      demos.assign(noisy.examples().begin(), noisy.examples().end());
      const auto ref = rectify(backend, ds.task(), demos, RectifyOptions{10});
      c.expect(ref.backend_calls == 1, "chunk 10 made " + std::to_string(ref.backend_calls) + " calls");
      for (std::size_t chunk : {2u, 5u}) {
        const auto r = rectify(backend, ds.task(), demos, RectifyOptions{chunk});
        c.expect(r.corrected == ref.corrected, "chunk " + std::to_string(chunk) + " differs at rho " + fixed(rho, 1));
        c.expect(r.backend_calls == 10 / chunk, "unexpected call count for chunk " + std::to_string(chunk));
      }
    }
  }
  c.note("20 demo sets x rho {1.0, 0.6}, chunks {2, 5, 10} identical");
  return c.outcome();
}

// 10. Byte-identical result payloads across repeated sweeps.
Outcome determinism() {
  Check c;
  const auto root = fs::temp_directory_path() / "nlicl_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::vector<std::string>> payloads(2);
  for (int rep = 0; rep < 2; ++rep) {
    const auto task = TaskTemplate::sst5();
    for (const char* backend : {"hash", "oracle"}) {
      RunConfig cfg;
      cfg.task = "sst5";
      cfg.backend.kind = backend;
      cfg.estimator.epochs = 50;
      cfg.rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
      const auto exp =
          Experiment::from_datasets(cfg, synthetic_dataset(task, 400, 12, "tr"), synthetic_dataset(task, 60, 13, "va"));
      for (auto kind : {StrategyKind::kNone, StrategyKind::kCorrection, StrategyKind::kWeighting,
                        StrategyKind::kReordering, StrategyKind::kSelection, StrategyKind::kRectification}) {
        RunSettings s;
        s.strategy.kind = kind;
        s.noise_seed = 5;
        const auto dir = root / std::to_string(rep) / backend;
        const auto path = write_sweep(dir, sweep(exp, s, cfg.rates));
        payloads[rep].push_back(read_file(path.string()));
      }
    }
  }
  c.expect(payloads[0].size() == 12 && payloads[0] == payloads[1], "sweep payloads differ between runs");
  std::size_t bytes = 0;
  for (const auto& p : payloads[0]) bytes += p.size();
  c.note("12 sweep files, " + std::to_string(bytes) + " bytes identical");
  return c.outcome();
}

// 11. Optional live check against a real completion endpoint.
Outcome live() {
  const char* endpoint = std::getenv("NLICL_LIVE_ENDPOINT");
  const char* model = std::getenv("NLICL_LIVE_MODEL");
  const char* train = std::getenv("NLICL_LIVE_MRPC_TRAIN");
  const char* validation = std::getenv("NLICL_LIVE_MRPC_VALIDATION");
  if (!endpoint || !model || !train || !validation) {
    return {Outcome::kSkip,
            "set NLICL_LIVE_ENDPOINT, NLICL_LIVE_MODEL, NLICL_LIVE_MRPC_TRAIN and NLICL_LIVE_MRPC_VALIDATION"};
  }
  Check c;
  RunConfig cfg;
  cfg.task = "mrpc";
  cfg.train_path = train;
  cfg.validation_path = validation;
  cfg.backend.kind = "http";
  cfg.backend.endpoint = endpoint;
  cfg.backend.model = model;
  if (const char* auth = std::getenv("NLICL_LIVE_AUTH_ENV")) cfg.backend.auth_env = auth;
  cfg.workers = 4;
  cfg.output_dir = (fs::temp_directory_path() / "nlicl_acceptance_live").string();
  const auto exp = Experiment::prepare(cfg);
  const std::vector<double> rates{0.0, 0.5};
  const auto s = sweep(exp, with(StrategyKind::kNone), rates);
  c.expect(s.runs[1].accuracy < s.runs[0].accuracy,
           "accuracy at r=0.5 (" + fixed(s.runs[1].accuracy) + ") not below r=0 (" + fixed(s.runs[0].accuracy) + ")");
  c.note("r=0 " + fixed(s.runs[0].accuracy) + ", r=0.5 " + fixed(s.runs[1].accuracy));
  return c.outcome();
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0 = no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "noise model", 2.0, noise_model},
      {2, "retrieval exactness", 1.0, retrieval_exactness},
      {3, "strategy semantics", 0.0, strategy_semantics},
      {4, "rectification accuracy oracle", 0.0, tau_oracle},
      {5, "end-to-end shape", 30.0, end_to_end_shape},
      {6, "stability direction", 0.0, stability_direction},
      {7, "classifier", 5.0, classifier},
      {8, "prompt golden files", 0.0, goldens},
      {9, "chunking equivalence", 0.0, chunking},
      {10, "determinism", 0.0, determinism},
      {11, "live endpoint direction (optional)", 0.0, live},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = cr.run();
    } catch (const std::exception& e) {
      out = {Outcome::kFail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.kind == Outcome::kPass && cr.limit_s > 0 && secs >= cr.limit_s) {
      out = {Outcome::kFail, "took " + fixed(secs, 2) + " s, limit " + fixed(cr.limit_s, 0) + " s; " + out.detail};
    }
    const char* tag = out.kind == Outcome::kPass ? "PASS" : out.kind == Outcome::kFail ? "FAIL" : "SKIP";
    failed += out.kind == Outcome::kFail;
    std::cout << tag << "  " << std::setw(2) << cr.id << "  " << cr.name << "  (" << fixed(secs, 2) << " s)  "
              << out.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
