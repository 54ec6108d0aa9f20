#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlicl/backend.hpp"
#include "nlicl/confidence.hpp"
#include "nlicl/corpus.hpp"
#include "nlicl/rectifier.hpp"
#include "nlicl/retrieval.hpp"
#include "nlicl/strategies.hpp"

namespace nlicl {

enum class CorruptionMode {
  kRetrievalSet,   // corrupt the whole retrieval set, then retrieve
  kPostRetrieval,  // retrieve from the clean set, then corrupt each query's demos
};
CorruptionMode parse_corruption_mode(std::string_view name);
std::string_view corruption_mode_name(CorruptionMode mode);

struct EmbeddingSpec {
  std::string kind = "hashing";  // hashing | remote
  std::size_t dim = 256;
  std::string endpoint;
  std::string model;
  std::string auth_env;
  std::string cassette;
  std::string cassette_mode = "off";
};

struct BackendSpec {
  std::string kind = "hash";  // hash | oracle | http
  // http
  std::string endpoint;
  std::string model;
  std::string auth_env;
  std::string cassette;
  std::string cassette_mode = "off";
  int max_in_flight = 8;
  std::size_t max_prompt_chars = 0;
  // oracle: fidelity g(s) = clamp(base + slope * s, 0, 1)
  double fidelity_base = 0.5;
  double fidelity_slope = 0.5;
  double rectifier_fidelity = 1.0;
};

struct EstimatorSpec {
  std::string kind = "classifier";  // classifier | oracle
  std::size_t epochs = 200;
  double learning_rate = 0.1;
  double p_correct = 0.9;
  std::string classifier_path;  // optional prebuilt classifier
};

struct StrategySpec {
  StrategyKind kind = StrategyKind::kNone;
  double theta = 0.3;
  double high_threshold = 0.5;
  WeightingFormat format;
  // Selection only: refill from deeper retrieval ranks up to n survivors.
  bool backfill = false;
};

struct RectifierSpec {
  std::size_t chunk_size = 10;
  bool strict = false;
  BackendSpec backend = [] {
    BackendSpec b;
    b.kind = "oracle";
    return b;
  }();
};

// Everything that varies between runs sharing one Experiment.
struct RunSettings {
  StrategySpec strategy;
  double rate = 0.0;
  CorruptionMode mode = CorruptionMode::kRetrievalSet;
  std::uint64_t noise_seed = 0;
};

struct RunConfig {
  std::string train_path;
  std::string validation_path;
  std::string task = "sst5";  // builtin template name or template file
  std::size_t n = 10;
  DemoOrder order = DemoOrder::kAscending;
  std::string index_path;  // optional prebuilt index
  double clean_fraction = 0.1;
  std::uint64_t seed = 0;  // artifacts: clean split, classifier
  RunSettings run;
  std::vector<double> rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::uint64_t> stability_seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  EmbeddingSpec embedding;
  EstimatorSpec estimator;
  BackendSpec backend;
  RectifierSpec rectifier;
  std::size_t workers = 1;
  std::string output_dir = "results";

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
  // Stable content hash of the canonical JSON form.
  std::string hash() const;
};

RunConfig load_config(const std::filesystem::path& path);
// "a.b.c=value"; value parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& config, std::string_view assignment);

struct DecodeResult {
  std::size_t label = 0;
  std::vector<double> scores;
};

// Scores every candidate (prefixed with `candidate_prefix`) and returns the
// highest-scoring one, i.e. minimal negative log-likelihood. Ties go to the
// lowest index.
DecodeResult decode_label(const ModelBackend& backend, std::string_view prompt, const LabelSpace& labels,
                          std::string_view candidate_prefix);

struct QueryRecord {
  std::string query_id;
  std::vector<std::string> demo_ids;           // post-strategy order
  std::vector<std::size_t> demo_labels;        // post-strategy labels
  std::vector<std::size_t> demo_true_labels;   // clean labels, aligned with demo_ids
  std::vector<double> candidate_scores;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  nlohmann::json to_json() const;
  static QueryRecord from_json(const nlohmann::json& j);
};

struct RunResult {
  std::string strategy;
  double rate = 0.0;
  std::string mode;
  std::uint64_t noise_seed = 0;
  std::string config_hash;
  double accuracy = 0.0;
  // Label agreement with the clean labels after correction/rectification.
  std::optional<double> rectification_accuracy;
  std::vector<QueryRecord> records;

  nlohmann::json to_json() const;
  static RunResult from_json(const nlohmann::json& j);
};

double accuracy_of(std::span<const QueryRecord> records);

struct StabilityReport {
  std::string strategy;
  double rate = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies;
  double mean = 0.0;
  double std = 0.0;  // sample (N - 1)

  nlohmann::json to_json() const;
  static StabilityReport from_json(const nlohmann::json& j);
};

// Mean and sample standard deviation; needs >= 2 values.
StabilityReport summarize_accuracies(std::vector<double> accuracies);

// Loaded data plus the artifacts shared by every run of one configuration:
// retrieval index, clean subset, confidence estimator and backends.
class Experiment {
 public:
  // Loads datasets from the config's paths and builds (or loads cached)
  // artifacts under output_dir/artifacts.
  static Experiment prepare(const RunConfig& config);
  // In-memory datasets; artifacts built without caching.
  static Experiment from_datasets(const RunConfig& config, Dataset train, Dataset validation);

  const RunConfig& config() const { return config_; }
  const TaskTemplate& task() const { return *task_; }
  std::shared_ptr<const TaskTemplate> task_ptr() const { return task_; }
  const Dataset& train() const { return *train_; }
  const Dataset& validation() const { return *validation_; }
  const Dataset& clean() const { return *clean_; }
  const EmbeddingIndex& index() const { return *index_; }
  const EmbeddingProvider& provider() const { return *provider_; }
  std::shared_ptr<const EmbeddingProvider> provider_ptr() const { return provider_; }
  const Retriever& retriever() const { return retriever_; }
  // Built on first use; throws if the config cannot provide one.
  const ConfidenceEstimator& estimator() const;
  const ModelBackend& backend() const { return *backend_; }
  const ModelBackend& rectifier_backend() const;

  void set_backend(std::shared_ptr<const ModelBackend> backend) { backend_ = std::move(backend); }
  void set_rectifier_backend(std::shared_ptr<const ModelBackend> backend) { rectifier_backend_ = std::move(backend); }
  void set_estimator(std::shared_ptr<const ConfidenceEstimator> estimator) { estimator_ = std::move(estimator); }
  void set_retriever(Retriever retriever) { retriever_ = std::move(retriever); }

 private:
  Experiment(const RunConfig& config, Dataset train, Dataset validation, bool use_cache);

  RunConfig config_;
  std::shared_ptr<const TaskTemplate> task_;
  std::shared_ptr<const Dataset> train_;
  std::shared_ptr<const Dataset> validation_;
  std::shared_ptr<const Dataset> clean_;
  std::shared_ptr<const EmbeddingProvider> provider_;
  std::shared_ptr<const EmbeddingIndex> index_;
  Retriever retriever_;
  bool use_cache_ = false;
  mutable std::shared_ptr<const ConfidenceEstimator> estimator_;
  std::shared_ptr<const ModelBackend> backend_;
  mutable std::shared_ptr<const ModelBackend> rectifier_backend_;
};

std::shared_ptr<const ModelBackend> make_backend(const BackendSpec& spec, const Experiment& experiment);
std::shared_ptr<const EmbeddingProvider> make_provider(const EmbeddingSpec& spec);

// Evaluates every validation query under `settings`. On failure, if
// `partial_manifest` is given, the completed records and the error are
// written there before rethrowing.
RunResult evaluate(const Experiment& experiment, const RunSettings& settings,
                   const std::filesystem::path* partial_manifest = nullptr);
RunResult evaluate(const RunConfig& config);

struct SweepResult {
  std::string strategy;
  std::vector<RunResult> runs;

  nlohmann::json series() const;
  nlohmann::json to_json() const;
};

// One evaluation per rate. Correction ignores input labels, so it is
// evaluated once and shared across rates.
SweepResult sweep(const Experiment& experiment, const RunSettings& base, std::span<const double> rates,
                  const std::filesystem::path* partial_manifest = nullptr);

// Post-retrieval corruption at settings.rate under each seed.
StabilityReport stability(const Experiment& experiment, const RunSettings& settings,
                          std::span<const std::uint64_t> seeds,
                          const std::filesystem::path* partial_manifest = nullptr);

// Result files (byte-deterministic for deterministic backends).
std::filesystem::path write_run(const std::filesystem::path& dir, const RunResult& result);
std::filesystem::path write_sweep(const std::filesystem::path& dir, const SweepResult& result);
std::filesystem::path write_stability(const std::filesystem::path& dir, const StabilityReport& report);
// Timestamps and provenance live here, apart from the result payloads.
void write_manifest(const std::filesystem::path& dir, std::string_view command, const RunConfig& config,
                    std::span<const std::filesystem::path> outputs);

struct ReportFiles {
  std::filesystem::path summary;
  std::filesystem::path table;
  std::vector<std::filesystem::path> series;
};

// Reads run_*, sweep_* and stability_* files in `dir` and writes
// summary.json, table.csv and series/<strategy>.csv. Re-counts every run's
// accuracy from its records and throws AssertionError on disagreement.
ReportFiles emit_report(const std::filesystem::path& dir);

}  // namespace nlicl
