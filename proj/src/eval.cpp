#include "nlicl/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "nlicl/error.hpp"
#include "nlicl/noise.hpp"
#include "nlicl/oracle_backend.hpp"
#include "nlicl/random.hpp"

namespace nlicl {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return fnv1a64(buf.str());
}

std::shared_ptr<Cassette> make_cassette(const std::string& path, const std::string& mode) {
  const auto m = parse_cassette_mode(mode);
  if (m == CassetteMode::kOff) return nullptr;
  if (path.empty()) throw ConfigError("cassette mode '" + mode + "' needs a cassette path");
  return std::make_shared<Cassette>(path, m);
}

// "0.3" -> "0.30"; used in file names.
std::string rate_tag(double rate) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << rate;
  return os.str();
}

}  // namespace

std::shared_ptr<const EmbeddingProvider> make_provider(const EmbeddingSpec& spec) {
  if (spec.kind == "hashing") return std::make_shared<HashingEmbedder>(spec.dim);
  if (spec.kind == "remote") {
    RemoteEmbedderOptions opts;
    opts.http.endpoint = spec.endpoint;
    opts.http.auth_env = spec.auth_env;
    opts.http.cassette = make_cassette(spec.cassette, spec.cassette_mode);
    opts.model = spec.model;
    opts.dim = spec.dim;
    return std::make_shared<RemoteEmbedder>(std::move(opts));
  }
  throw ConfigError("unknown embedding kind '" + spec.kind + "'");
}

std::shared_ptr<const ModelBackend> make_backend(const BackendSpec& spec, const Experiment& experiment) {
  if (spec.kind == "hash") return hash_mock();
  if (spec.kind == "oracle") {
    auto world = OracleWorld::from_datasets(experiment.task_ptr(), {&experiment.train(), &experiment.validation()});
    const double base = spec.fidelity_base, slope = spec.fidelity_slope;
    world.fidelity = [base, slope](double s) { return std::clamp(base + slope * s, 0.0, 1.0); };
    world.rectifier_fidelity = spec.rectifier_fidelity;
    const auto& fmt = experiment.config().run.strategy.format;
    world.ignorable_suffixes = {fmt.suffix(fmt.high), fmt.suffix(fmt.low)};
    return oracle_mock(std::move(world));
  }
  if (spec.kind == "http") {
    HttpBackendOptions opts;
    opts.http.endpoint = spec.endpoint;
    opts.http.auth_env = spec.auth_env;
    opts.http.max_in_flight = spec.max_in_flight;
    opts.http.cassette = make_cassette(spec.cassette, spec.cassette_mode);
    opts.model = spec.model;
    opts.max_prompt_chars = spec.max_prompt_chars;
    return std::make_shared<HttpBackend>(std::move(opts));
  }
  throw ConfigError("unknown backend kind '" + spec.kind + "'");
}

Experiment::Experiment(const RunConfig& config, Dataset train, Dataset validation, bool use_cache)
    : config_(config), use_cache_(use_cache) {
  config_.validate();
  task_ = train.task_ptr();
  if (validation.task() .task_name() != task_->task_name() ||
      validation.task().label_space() != task_->label_space()) {
    throw ConfigError("train and validation use different templates");
  }
  train_ = std::make_shared<const Dataset>(std::move(train));
  validation_ = std::make_shared<const Dataset>(std::move(validation));
  if (train_->empty()) throw ConfigError("training set is empty");
  clean_ = std::make_shared<const Dataset>(split_clean_subset(*train_, config_.clean_fraction, config_.seed).clean);
  provider_ = make_provider(config_.embedding);

  std::filesystem::path cache_file;
  if (!config_.index_path.empty()) {
    index_ = std::make_shared<const EmbeddingIndex>(EmbeddingIndex::load(config_.index_path));
  } else if (use_cache_) {
    const std::string key = hex64(mix64(fnv1a64(json{{"train", hex64(file_digest(config_.train_path))},
                                                     {"task", task_->to_json()},
                                                     {"provider", provider_->tag()}}
                                                    .dump())));
    cache_file = std::filesystem::path(config_.output_dir) / "artifacts" / ("index-" + key + ".bin");
    if (std::filesystem::exists(cache_file)) index_ = std::make_shared<const EmbeddingIndex>(EmbeddingIndex::load(cache_file));
  }
  if (!index_) {
    index_ = std::make_shared<const EmbeddingIndex>(build_index(*train_, *provider_));
    if (!cache_file.empty()) {
      std::filesystem::create_directories(cache_file.parent_path());
      index_->save(cache_file);
    }
  }
  if (index_->provider_tag() != provider_->tag()) {
    throw ConfigError("index was built with '" + index_->provider_tag() + "', config uses '" + provider_->tag() + "'");
  }
  if (index_->size() != train_->size()) throw ConfigError("index size does not match the training set");
  retriever_ = topk_retriever(index_, provider_, task_, config_.order);
  backend_ = make_backend(config_.backend, *this);
}

Experiment Experiment::prepare(const RunConfig& config) {
  if (config.train_path.empty() || config.validation_path.empty()) {
    throw ConfigError("config needs train and validation paths");
  }
  const auto task = TaskTemplate::resolve(config.task);
  return Experiment(config, load_dataset(config.train_path, task), load_dataset(config.validation_path, task), true);
}

Experiment Experiment::from_datasets(const RunConfig& config, Dataset train, Dataset validation) {
  return Experiment(config, std::move(train), std::move(validation), false);
}

const ConfidenceEstimator& Experiment::estimator() const {
  if (estimator_) return *estimator_;
  const auto& spec = config_.estimator;
  if (spec.kind == "oracle") {
    std::unordered_map<std::string, std::size_t> truth;
    for (const auto& ex : train_->examples()) truth.emplace(ex.id, ex.label);
    const std::size_t m = task_->label_space().size();
    const double off = (1.0 - spec.p_correct) / static_cast<double>(m - 1);
    estimator_ = oracle_estimator(std::move(truth), m, spec.p_correct, std::min(off, std::nextafter(spec.p_correct, 0.0)));
    return *estimator_;
  }
  std::shared_ptr<const LinearClassifier> classifier;
  std::filesystem::path cache_file;
  if (!spec.classifier_path.empty()) {
    classifier = std::make_shared<const LinearClassifier>(LinearClassifier::load(spec.classifier_path));
  } else if (use_cache_) {
    const std::string key = hex64(mix64(fnv1a64(json{{"train", hex64(file_digest(config_.train_path))},
                                                     {"task", task_->to_json()},
                                                     {"provider", provider_->tag()},
                                                     {"seed", config_.seed},
                                                     {"clean_fraction", config_.clean_fraction},
                                                     {"epochs", spec.epochs},
                                                     {"learning_rate", spec.learning_rate}}
                                                    .dump())));
    cache_file = std::filesystem::path(config_.output_dir) / "artifacts" / ("classifier-" + key + ".json");
    if (std::filesystem::exists(cache_file)) classifier = std::make_shared<const LinearClassifier>(LinearClassifier::load(cache_file));
  }
  if (!classifier) {
    TrainingOptions opts{spec.epochs, spec.learning_rate, config_.seed};
    classifier = std::make_shared<const LinearClassifier>(train_classifier(*clean_, *provider_, opts).classifier);
    if (!cache_file.empty()) {
      std::filesystem::create_directories(cache_file.parent_path());
      classifier->save(cache_file);
    }
  }
  estimator_ = std::make_shared<ClassifierEstimator>(classifier, provider_, task_);
  return *estimator_;
}

const ModelBackend& Experiment::rectifier_backend() const {
  if (!rectifier_backend_) rectifier_backend_ = make_backend(config_.rectifier.backend, *this);
  return *rectifier_backend_;
}

DecodeResult decode_label(const ModelBackend& backend, std::string_view prompt, const LabelSpace& labels,
                          std::string_view candidate_prefix) {
  DecodeResult out;
  out.scores.reserve(labels.size());
  for (const auto& label : labels.labels()) {
    std::string candidate(candidate_prefix);
    candidate += label;
    const double s = backend.score(prompt, candidate);
    if (!std::isfinite(s)) throw BackendError("backend returned a non-finite score for '" + label + "'", false);
    out.scores.push_back(s);
  }
  out.label = static_cast<std::size_t>(std::max_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
  return out;
}

json QueryRecord::to_json() const {
  return {{"query_id", query_id},     {"demo_ids", demo_ids},
          {"demo_labels", demo_labels}, {"demo_true_labels", demo_true_labels},
          {"candidate_scores", candidate_scores}, {"predicted", predicted},
          {"gold", gold}};
}

QueryRecord QueryRecord::from_json(const json& j) {
  QueryRecord r;
  r.query_id = j.at("query_id").get<std::string>();
  r.demo_ids = j.at("demo_ids").get<std::vector<std::string>>();
  r.demo_labels = j.at("demo_labels").get<std::vector<std::size_t>>();
  r.demo_true_labels = j.at("demo_true_labels").get<std::vector<std::size_t>>();
  r.candidate_scores = j.at("candidate_scores").get<std::vector<double>>();
  r.predicted = j.at("predicted").get<std::size_t>();
  r.gold = j.at("gold").get<std::size_t>();
  return r;
}

json RunResult::to_json() const {
  json records_json = json::array();
  for (const auto& r : records) records_json.push_back(r.to_json());
  json j = {{"kind", "run"},
            {"strategy", strategy},
            {"rate", rate},
            {"mode", mode},
            {"noise_seed", noise_seed},
            {"config_hash", config_hash},
            {"accuracy", accuracy},
            {"queries", records.size()},
            {"records", std::move(records_json)}};
  j["rectification_accuracy"] = rectification_accuracy ? json(*rectification_accuracy) : json(nullptr);
  return j;
}

RunResult RunResult::from_json(const json& j) {
  RunResult r;
  try {
    r.strategy = j.at("strategy").get<std::string>();
    r.rate = j.at("rate").get<double>();
    r.mode = j.at("mode").get<std::string>();
    r.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    if (auto it = j.find("rectification_accuracy"); it != j.end() && !it->is_null()) {
      r.rectification_accuracy = it->get<double>();
    }
    for (const auto& rec : j.at("records")) r.records.push_back(QueryRecord::from_json(rec));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run result: ") + e.what());
  }
  return r;
}

double accuracy_of(std::span<const QueryRecord> records) {
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.predicted == r.gold;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

json StabilityReport::to_json() const {
  return {{"kind", "stability"}, {"strategy", strategy}, {"rate", rate}, {"seeds", seeds},
          {"accuracies", accuracies}, {"mean", mean}, {"std", std}};
}

StabilityReport StabilityReport::from_json(const json& j) {
  StabilityReport r;
  try {
    r.strategy = j.at("strategy").get<std::string>();
    r.rate = j.at("rate").get<double>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.accuracies = j.at("accuracies").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed stability report: ") + e.what());
  }
  return r;
}

StabilityReport summarize_accuracies(std::vector<double> accuracies) {
  if (accuracies.size() < 2) throw ConfigError("stability needs at least 2 seeds");
  StabilityReport r;
  const double n = static_cast<double>(accuracies.size());
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  r.mean = sum / n;
  double ss = 0.0;
  for (double a : accuracies) ss += (a - r.mean) * (a - r.mean);
  r.std = std::sqrt(ss / (n - 1.0));
  // Identical inputs must give exactly zero.
  if (std::all_of(accuracies.begin(), accuracies.end(), [&](double a) { return a == accuracies.front(); })) {
    r.mean = accuracies.front();
    r.std = 0.0;
  }
  r.accuracies = std::move(accuracies);
  return r;
}

namespace {

struct Demos {
  std::vector<Example> shown;  // labels as seen before manipulation
  std::vector<std::size_t> truth;
};

// Retrieves k demos for `query` with labels per the corruption mode.
Demos fetch_demos(const Experiment& exp, const RunSettings& settings, const Dataset* corrupted, const Example& query,
                  std::size_t k) {
  Demos d;
  if (k == 0) return d;
  const auto ids = exp.retriever()(query, k, {});
  for (const auto& id : ids) {
    const Example& clean = exp.train().at(id);
    d.truth.push_back(clean.label);
    d.shown.push_back(corrupted ? corrupted->at(id) : clean);
  }
  if (settings.mode == CorruptionMode::kPostRetrieval && settings.rate > 0.0) {
    auto noisy = corrupt_labels(exp.train().with_examples(d.shown), settings.rate,
                                derive_seed(settings.noise_seed, "post:" + query.id));
    d.shown.assign(noisy.dataset.examples().begin(), noisy.dataset.examples().end());
  }
  return d;
}

std::vector<AnnotatedDemo> manipulate(const Experiment& exp, const RunSettings& settings, const Dataset* corrupted,
                                      const Example& query, Demos& demos) {
  const auto& s = settings.strategy;
  switch (s.kind) {
    case StrategyKind::kNone:
      return apply_none(demos.shown);
    case StrategyKind::kCorrection:
      return apply_correction(demos.shown, exp.estimator());
    case StrategyKind::kWeighting:
      return apply_weighting(demos.shown, exp.estimator(), s.high_threshold, s.format);
    case StrategyKind::kReordering:
      return apply_reordering(demos.shown, exp.estimator());
    case StrategyKind::kSelection: {
      auto kept = apply_selection(demos.shown, exp.estimator(), s.theta);
      const std::size_t n = demos.shown.size();
      std::size_t depth = n;
      while (s.backfill && kept.size() < n && depth < exp.index().size()) {
        depth = std::min(2 * depth, exp.index().size());
        demos = fetch_demos(exp, settings, corrupted, query, depth);
        kept = apply_selection(demos.shown, exp.estimator(), s.theta);
      }
      if (kept.size() > n) {
        // Keep the n most similar survivors, preserving prompt order.
        if (exp.config().order == DemoOrder::kAscending) {
          kept.erase(kept.begin(), kept.end() - static_cast<std::ptrdiff_t>(n));
        } else {
          kept.resize(n);
        }
      }
      return kept;
    }
    case StrategyKind::kRectification: {
      if (demos.shown.empty()) return {};
      RectifyOptions opts;
      opts.chunk_size = exp.config().rectifier.chunk_size;
      opts.strict = exp.config().rectifier.strict;
      const auto result = rectify(exp.rectifier_backend(), exp.task(), demos.shown, opts);
      return apply_none(apply_rectification(demos.shown, result));
    }
  }
  throw ConfigError("unhandled strategy");
}

QueryRecord evaluate_query(const Experiment& exp, const RunSettings& settings, const Dataset* corrupted,
                           const Example& query) {
  Demos demos = fetch_demos(exp, settings, corrupted, query, exp.config().n);
  const auto annotated = manipulate(exp, settings, corrupted, query, demos);

  QueryRecord rec;
  rec.query_id = query.id;
  rec.gold = query.label;
  for (const auto& a : annotated) {
    rec.demo_ids.push_back(a.example.id);
    rec.demo_labels.push_back(a.example.label);
    rec.demo_true_labels.push_back(exp.train().at(a.example.id).label);
  }
  const auto prompt = render_annotated_prompt(exp.task(), annotated, query, settings.strategy.format);
  auto decoded = decode_label(exp.backend(), prompt, exp.task().label_space(), exp.task().label_prefix());
  rec.predicted = decoded.label;
  rec.candidate_scores = std::move(decoded.scores);
  return rec;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace

RunResult evaluate(const Experiment& exp, const RunSettings& settings, const std::filesystem::path* partial_manifest) {
  if (!(settings.rate >= 0.0 && settings.rate <= 1.0)) throw ConfigError("rate must lie in [0, 1]");
  std::optional<Dataset> corrupted;
  if (settings.mode == CorruptionMode::kRetrievalSet) {
    corrupted = corrupt_labels(exp.train(), settings.rate, settings.noise_seed).dataset;
  }
  const Dataset* corrupted_ptr = corrupted ? &*corrupted : nullptr;
  // Build lazily-created shared state before fanning out.
  if (settings.strategy.kind == StrategyKind::kCorrection || settings.strategy.kind == StrategyKind::kWeighting ||
      settings.strategy.kind == StrategyKind::kReordering || settings.strategy.kind == StrategyKind::kSelection) {
    exp.estimator();
  }
  if (settings.strategy.kind == StrategyKind::kRectification) exp.rectifier_backend();

  const auto queries = exp.validation().examples();
  std::vector<std::optional<QueryRecord>> slots(queries.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= queries.size() || failed.load()) return;
      try {
        slots[i] = evaluate_query(exp, settings, corrupted_ptr, queries[i]);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(exp.config().workers, 1),
                                                    std::max<std::size_t>(queries.size(), 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  RunResult result;
  result.strategy = std::string(strategy_name(settings.strategy.kind));
  result.rate = settings.rate;
  result.mode = std::string(corruption_mode_name(settings.mode));
  result.noise_seed = settings.noise_seed;
  result.config_hash = exp.config().hash();

  if (error) {
    if (partial_manifest) {
      json done = json::array();
      for (const auto& s : slots) {
        if (s) done.push_back(s->to_json());
      }
      std::string what = "unknown error";
      try {
        std::rethrow_exception(error);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      write_json(*partial_manifest, {{"kind", "partial"},
                                     {"strategy", result.strategy},
                                     {"rate", result.rate},
                                     {"error", what},
                                     {"completed", done.size()},
                                     {"total", queries.size()},
                                     {"records", std::move(done)}});
    }
    std::rethrow_exception(error);
  }

  result.records.reserve(slots.size());
  for (auto& s : slots) result.records.push_back(std::move(*s));
  result.accuracy = accuracy_of(result.records);
  if (settings.strategy.kind == StrategyKind::kCorrection || settings.strategy.kind == StrategyKind::kRectification) {
    std::size_t hits = 0, total = 0;
    for (const auto& r : result.records) {
      for (std::size_t k = 0; k < r.demo_labels.size(); ++k) hits += r.demo_labels[k] == r.demo_true_labels[k];
      total += r.demo_labels.size();
    }
    if (total > 0) result.rectification_accuracy = static_cast<double>(hits) / static_cast<double>(total);
  }
  return result;
}

RunResult evaluate(const RunConfig& config) {
  const auto exp = Experiment::prepare(config);
  return evaluate(exp, config.run);
}

json SweepResult::series() const {
  json s = json::array();
  for (const auto& r : runs) s.push_back({{"rate", r.rate}, {"accuracy", r.accuracy}});
  return s;
}

json SweepResult::to_json() const {
  json runs_json = json::array();
  for (const auto& r : runs) runs_json.push_back(r.to_json());
  return {{"kind", "sweep"}, {"strategy", strategy}, {"series", series()}, {"runs", std::move(runs_json)}};
}

SweepResult sweep(const Experiment& experiment, const RunSettings& base, std::span<const double> rates,
                  const std::filesystem::path* partial_manifest) {
  SweepResult out;
  out.strategy = std::string(strategy_name(base.strategy.kind));
  std::optional<RunResult> shared;
  for (double rate : rates) {
    RunSettings s = base;
    s.rate = rate;
    if (base.strategy.kind == StrategyKind::kCorrection) {
      if (!shared) shared = evaluate(experiment, s, partial_manifest);
      RunResult copy = *shared;
      copy.rate = rate;
      out.runs.push_back(std::move(copy));
      continue;
    }
    out.runs.push_back(evaluate(experiment, s, partial_manifest));
  }
  return out;
}

StabilityReport stability(const Experiment& experiment, const RunSettings& settings,
                          std::span<const std::uint64_t> seeds, const std::filesystem::path* partial_manifest) {
  if (settings.mode != CorruptionMode::kPostRetrieval) {
    throw ConfigError("stability requires post-retrieval corruption");
  }
  if (seeds.size() < 2) throw ConfigError("stability needs at least 2 seeds");
  std::vector<double> acc;
  for (auto seed : seeds) {
    RunSettings s = settings;
    s.noise_seed = seed;
    acc.push_back(evaluate(experiment, s, partial_manifest).accuracy);
  }
  auto report = summarize_accuracies(std::move(acc));
  report.strategy = std::string(strategy_name(settings.strategy.kind));
  report.rate = settings.rate;
  report.seeds.assign(seeds.begin(), seeds.end());
  return report;
}

std::filesystem::path write_run(const std::filesystem::path& dir, const RunResult& result) {
  const auto path = dir / ("run_" + result.strategy + "_r" + rate_tag(result.rate) + ".json");
  write_json(path, result.to_json());
  return path;
}

std::filesystem::path write_sweep(const std::filesystem::path& dir, const SweepResult& result) {
  const auto path = dir / ("sweep_" + result.strategy + ".json");
  write_json(path, result.to_json());
  return path;
}

std::filesystem::path write_stability(const std::filesystem::path& dir, const StabilityReport& report) {
  const auto path = dir / ("stability_" + report.strategy + "_r" + rate_tag(report.rate) + ".json");
  write_json(path, report.to_json());
  return path;
}

void write_manifest(const std::filesystem::path& dir, std::string_view command, const RunConfig& config,
                    std::span<const std::filesystem::path> outputs) {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  json files = json::array();
  for (const auto& p : outputs) files.push_back(p.filename().string());
  write_json(dir / "manifest.json", {{"command", command},
                                     {"written_at", ts.str()},
                                     {"config_hash", config.hash()},
                                     {"config", config.to_json()},
                                     {"files", files}});
}

}  // namespace nlicl
