#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "nlicl/error.hpp"
#include "nlicl/eval.hpp"
#include "nlicl/random.hpp"

namespace nlicl {
namespace {

using nlohmann::json;

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ConfigError("unknown config key '" + std::string(where) + (where.empty() ? "" : ".") + k + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

BackendSpec backend_from_json(const json& j, BackendSpec spec, std::string_view where) {
  check_keys(j, where,
             {"kind", "endpoint", "model", "auth_env", "cassette", "cassette_mode", "max_in_flight",
              "max_prompt_chars", "fidelity_base", "fidelity_slope", "rectifier_fidelity"});
  read(j, "kind", spec.kind);
  read(j, "endpoint", spec.endpoint);
  read(j, "model", spec.model);
  read(j, "auth_env", spec.auth_env);
  read(j, "cassette", spec.cassette);
  read(j, "cassette_mode", spec.cassette_mode);
  read(j, "max_in_flight", spec.max_in_flight);
  read(j, "max_prompt_chars", spec.max_prompt_chars);
  read(j, "fidelity_base", spec.fidelity_base);
  read(j, "fidelity_slope", spec.fidelity_slope);
  read(j, "rectifier_fidelity", spec.rectifier_fidelity);
  return spec;
}

json backend_to_json(const BackendSpec& s) {
  return {{"kind", s.kind},
          {"endpoint", s.endpoint},
          {"model", s.model},
          {"auth_env", s.auth_env},
          {"cassette", s.cassette},
          {"cassette_mode", s.cassette_mode},
          {"max_in_flight", s.max_in_flight},
          {"max_prompt_chars", s.max_prompt_chars},
          {"fidelity_base", s.fidelity_base},
          {"fidelity_slope", s.fidelity_slope},
          {"rectifier_fidelity", s.rectifier_fidelity}};
}

void validate_backend(const BackendSpec& s, std::string_view where) {
  if (s.kind != "hash" && s.kind != "oracle" && s.kind != "http") {
    throw ConfigError(std::string(where) + ".kind must be hash, oracle or http");
  }
  if (s.kind == "http" && (s.endpoint.empty() || s.model.empty())) {
    throw ConfigError(std::string(where) + ": http backend needs endpoint and model");
  }
  if (!(s.rectifier_fidelity >= 0.0 && s.rectifier_fidelity <= 1.0)) {
    throw ConfigError(std::string(where) + ".rectifier_fidelity must lie in [0, 1]");
  }
  if (s.fidelity_slope < 0.0) throw ConfigError(std::string(where) + ".fidelity_slope must be >= 0");
  parse_cassette_mode(s.cassette_mode);
}

}  // namespace

CorruptionMode parse_corruption_mode(std::string_view name) {
  if (name == "retrieval-set") return CorruptionMode::kRetrievalSet;
  if (name == "post-retrieval") return CorruptionMode::kPostRetrieval;
  throw ConfigError("unknown corruption mode '" + std::string(name) + "'");
}

std::string_view corruption_mode_name(CorruptionMode mode) {
  return mode == CorruptionMode::kRetrievalSet ? "retrieval-set" : "post-retrieval";
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j, "",
               {"train", "validation", "task", "n", "order", "index_path", "clean_fraction", "seed", "rate", "mode",
                "noise_seed", "strategy", "rates", "stability_seeds", "embedding", "estimator", "backend",
                "rectifier", "workers", "output_dir"});
    read(j, "train", c.train_path);
    read(j, "validation", c.validation_path);
    read(j, "task", c.task);
    read(j, "n", c.n);
    if (auto it = j.find("order"); it != j.end()) c.order = parse_demo_order(it->get<std::string>());
    read(j, "index_path", c.index_path);
    read(j, "clean_fraction", c.clean_fraction);
    read(j, "seed", c.seed);
    read(j, "rate", c.run.rate);
    if (auto it = j.find("mode"); it != j.end()) c.run.mode = parse_corruption_mode(it->get<std::string>());
    read(j, "noise_seed", c.run.noise_seed);
    if (auto it = j.find("strategy"); it != j.end()) {
      const json& s = *it;
      if (s.is_string()) {
        c.run.strategy.kind = parse_strategy(s.get<std::string>());
      } else {
        check_keys(s, "strategy", {"name", "theta", "high_threshold", "tag_format", "tag_high", "tag_low", "backfill"});
        if (auto n = s.find("name"); n != s.end()) c.run.strategy.kind = parse_strategy(n->get<std::string>());
        read(s, "theta", c.run.strategy.theta);
        read(s, "high_threshold", c.run.strategy.high_threshold);
        read(s, "tag_format", c.run.strategy.format.pattern);
        read(s, "tag_high", c.run.strategy.format.high);
        read(s, "tag_low", c.run.strategy.format.low);
        read(s, "backfill", c.run.strategy.backfill);
      }
    }
    read(j, "rates", c.rates);
    read(j, "stability_seeds", c.stability_seeds);
    if (auto it = j.find("embedding"); it != j.end()) {
      check_keys(*it, "embedding", {"kind", "dim", "endpoint", "model", "auth_env", "cassette", "cassette_mode"});
      read(*it, "kind", c.embedding.kind);
      read(*it, "dim", c.embedding.dim);
      read(*it, "endpoint", c.embedding.endpoint);
      read(*it, "model", c.embedding.model);
      read(*it, "auth_env", c.embedding.auth_env);
      read(*it, "cassette", c.embedding.cassette);
      read(*it, "cassette_mode", c.embedding.cassette_mode);
    }
    if (auto it = j.find("estimator"); it != j.end()) {
      check_keys(*it, "estimator", {"kind", "epochs", "learning_rate", "p_correct", "classifier_path"});
      read(*it, "kind", c.estimator.kind);
      read(*it, "epochs", c.estimator.epochs);
      read(*it, "learning_rate", c.estimator.learning_rate);
      read(*it, "p_correct", c.estimator.p_correct);
      read(*it, "classifier_path", c.estimator.classifier_path);
    }
    if (auto it = j.find("backend"); it != j.end()) c.backend = backend_from_json(*it, c.backend, "backend");
    if (auto it = j.find("rectifier"); it != j.end()) {
      check_keys(*it, "rectifier", {"chunk_size", "strict", "backend"});
      read(*it, "chunk_size", c.rectifier.chunk_size);
      read(*it, "strict", c.rectifier.strict);
      if (auto b = it->find("backend"); b != it->end()) {
        c.rectifier.backend = backend_from_json(*b, c.rectifier.backend, "rectifier.backend");
      }
    }
    read(j, "workers", c.workers);
    read(j, "output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

json RunConfig::to_json() const {
  const auto& s = run.strategy;
  return {{"train", train_path},
          {"validation", validation_path},
          {"task", task},
          {"n", n},
          {"order", demo_order_name(order)},
          {"index_path", index_path},
          {"clean_fraction", clean_fraction},
          {"seed", seed},
          {"rate", run.rate},
          {"mode", corruption_mode_name(run.mode)},
          {"noise_seed", run.noise_seed},
          {"strategy",
           {{"name", strategy_name(s.kind)},
            {"theta", s.theta},
            {"high_threshold", s.high_threshold},
            {"tag_format", s.format.pattern},
            {"tag_high", s.format.high},
            {"tag_low", s.format.low},
            {"backfill", s.backfill}}},
          {"rates", rates},
          {"stability_seeds", stability_seeds},
          {"embedding",
           {{"kind", embedding.kind},
            {"dim", embedding.dim},
            {"endpoint", embedding.endpoint},
            {"model", embedding.model},
            {"auth_env", embedding.auth_env},
            {"cassette", embedding.cassette},
            {"cassette_mode", embedding.cassette_mode}}},
          {"estimator",
           {{"kind", estimator.kind},
            {"epochs", estimator.epochs},
            {"learning_rate", estimator.learning_rate},
            {"p_correct", estimator.p_correct},
            {"classifier_path", estimator.classifier_path}}},
          {"backend", backend_to_json(backend)},
          {"rectifier",
           {{"chunk_size", rectifier.chunk_size},
            {"strict", rectifier.strict},
            {"backend", backend_to_json(rectifier.backend)}}},
          {"workers", workers},
          {"output_dir", output_dir}};
}

void RunConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(run.rate)) throw ConfigError("rate must lie in [0, 1]");
  for (double r : rates) {
    if (!in_unit(r)) throw ConfigError("every sweep rate must lie in [0, 1]");
  }
  if (!(clean_fraction > 0.0 && clean_fraction < 1.0)) throw ConfigError("clean_fraction must lie in (0, 1)");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (rectifier.chunk_size < 1) throw ConfigError("rectifier.chunk_size must be >= 1");
  const auto& s = run.strategy;
  if (!in_unit(s.theta)) throw ConfigError("strategy.theta must lie in [0, 1]");
  if (!(s.high_threshold > 0.0 && s.high_threshold < 1.0)) throw ConfigError("strategy.high_threshold must lie in (0, 1)");
  if (s.format.pattern.find("{tag}") == std::string::npos) throw ConfigError("strategy.tag_format needs {tag}");
  if (embedding.kind != "hashing" && embedding.kind != "remote") {
    throw ConfigError("embedding.kind must be hashing or remote");
  }
  if (embedding.dim == 0) throw ConfigError("embedding.dim must be positive");
  if (estimator.kind != "classifier" && estimator.kind != "oracle") {
    throw ConfigError("estimator.kind must be classifier or oracle");
  }
  if (!(estimator.p_correct > 0.0 && estimator.p_correct <= 1.0)) {
    throw ConfigError("estimator.p_correct must lie in (0, 1]");
  }
  validate_backend(backend, "backend");
  validate_backend(rectifier.backend, "rectifier.backend");
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("workers");
  j.erase("output_dir");
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << mix64(fnv1a64(j.dump()));
  return os.str();
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return RunConfig::from_json(j);
}

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like key.path=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    json& child = (*node)[part];
    if (child.is_string() && part == "strategy") child = json{{"name", child}};
    if (!child.is_object()) child = json::object();
    node = &child;
    start = dot + 1;
  }
}

}  // namespace nlicl
