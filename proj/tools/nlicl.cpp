// Command-line driver. Exit codes:
//   0 success, 1 unexpected failure, 2 configuration or usage error,
//   3 backend failure, 4 assertion failure, 5 data error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "nlicl/confidence.hpp"
#include "nlicl/error.hpp"
#include "nlicl/eval.hpp"
#include "nlicl/noise.hpp"
#include "nlicl/rectifier.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nlicl;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kBackend = 3, kAssertion = 4, kData = 5 };

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig load(const Globals& g) {
  json j = json::object();
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw ConfigError("cannot open config '" + g.config_path + "'");
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config '" + g.config_path + "': " + e.what());
    }
  }
  for (const auto& o : g.overrides) apply_override(j, o);
  return RunConfig::from_json(j);
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

json label_counts(const Dataset& ds) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : ds.task().label_space().labels()) counts[l] = 0;
  for (const auto& e : ds.examples()) ++counts[ds.task().label_space().label(e.label)];
  return counts;
}

Dataset load_train(const RunConfig& c, const std::string& input) {
  const std::string path = input.empty() ? c.train_path : input;
  if (path.empty()) throw ConfigError("no input dataset: pass --input or set 'train' in the config");
  return load_dataset(path, TaskTemplate::resolve(c.task));
}

fs::path partial_path(const RunConfig& c, std::string_view command) {
  return fs::path(c.output_dir) / ("partial_" + std::string(command) + ".json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label in-context learning experiment harness"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("-c,--config", g.config_path, "JSON run configuration");
  app.add_option("-s,--set", g.overrides, "Override a config value, e.g. --set strategy.theta=0.4")->take_all();
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string input, output, plan, task_name;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> corpus_rates{0.1, 0.2, 0.3, 0.4, 0.5};

  auto* ingest = app.add_subcommand("ingest", "Validate a dataset and print label statistics");
  ingest->add_option("-i,--input", input, "Dataset (JSONL)")->required();
  ingest->add_option("-t,--task", task_name, "Template name or file (default: config task)");
  ingest->add_option("-o,--output", output, "Write the normalized dataset here");

  auto* corrupt = app.add_subcommand("corrupt", "Flip a fraction of labels uniformly");
  corrupt->add_option("-i,--input", input, "Dataset (default: config train)");
  corrupt->add_option("-t,--task", task_name, "Template name or file (default: config task)");
  corrupt->add_option("-r,--rate", rate, "Noise rate in [0, 1]")->required();
  corrupt->add_option("--seed", seed, "Noise seed");
  corrupt->add_option("-o,--output", output, "Corrupted dataset")->required();
  corrupt->add_option("--plan", plan, "Corruption plan sidecar (default: <output>.plan.jsonl)");

  auto* index = app.add_subcommand("index", "Build the retrieval index");
  index->add_option("-i,--input", input, "Dataset (default: config train)");
  index->add_option("-o,--output", output, "Index file")->required();

  auto* train = app.add_subcommand("train-classifier", "Train the confidence classifier on the clean subset");
  train->add_option("--clean", input, "Use this dataset as the clean subset instead of sampling one");
  train->add_option("-o,--output", output, "Classifier file")->required();

  auto* rect = app.add_subcommand("build-rect-corpus", "Export the rectifier training corpus");
  rect->add_option("--clean", input, "Use this dataset as the clean subset instead of sampling one");
  rect->add_option("--rates", corpus_rates, "Noise rates sampled per record")->delimiter(',');
  rect->add_option("-o,--output", output, "Corpus file (JSONL prompt/completion)")->required();

  auto* run = app.add_subcommand("run", "Evaluate one strategy at one noise rate");
  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate the configured strategy across noise rates");
  auto* stab = app.add_subcommand("stability", "Post-retrieval corruption across seeds");
  auto* report = app.add_subcommand("report", "Summarize result files into tables and series");
  report->add_option("-d,--dir", output, "Results directory (default: config output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    const RunConfig config = load(g);
    const std::string task_spec = task_name.empty() ? config.task : task_name;

    if (ingest->parsed()) {
      const auto ds = load_dataset(input, TaskTemplate::resolve(task_spec));
      if (!output.empty()) write_dataset(output, ds);
      print({{"examples", ds.size()}, {"labels", label_counts(ds)}});
    } else if (corrupt->parsed()) {
      const std::string path = input.empty() ? config.train_path : input;
      if (path.empty()) throw ConfigError("no input dataset: pass --input or set 'train' in the config");
      const auto ds = load_dataset(path, TaskTemplate::resolve(task_spec));
      const auto out = corrupt_labels(ds, rate, seed);
      write_dataset(output, out.dataset);
      const std::string plan_path = plan.empty() ? output + ".plan.jsonl" : plan;
      write_plan(plan_path, out.plan, ds.task().label_space());
      print({{"examples", ds.size()}, {"flips", out.plan.flips.size()}, {"plan", plan_path}});
    } else if (index->parsed()) {
      const auto ds = load_train(config, input);
      const auto provider = make_provider(config.embedding);
      const auto idx = build_index(ds, *provider);
      idx.save(output);
      print({{"vectors", idx.size()}, {"dim", idx.dim()}, {"provider", idx.provider_tag()}});
    } else if (train->parsed()) {
      const auto clean = input.empty() ? split_clean_subset(load_train(config, ""), config.clean_fraction, config.seed).clean
                                       : load_dataset(input, TaskTemplate::resolve(config.task));
      const auto provider = make_provider(config.embedding);
      const auto result = train_classifier(
          clean, *provider, TrainingOptions{config.estimator.epochs, config.estimator.learning_rate, config.seed});
      result.classifier.save(output);
      std::size_t hits = 0;
      for (const auto& e : clean.examples()) {
        hits += predict_confidence(result.classifier, e, *provider, clean.task()).argmax() == e.label;
      }
      print({{"clean_examples", clean.size()},
             {"final_loss", result.loss_history.back()},
             {"train_accuracy", clean.empty() ? 0.0 : static_cast<double>(hits) / clean.size()}});
    } else if (rect->parsed()) {
      const auto clean = input.empty() ? split_clean_subset(load_train(config, ""), config.clean_fraction, config.seed).clean
                                       : load_dataset(input, TaskTemplate::resolve(config.task));
      auto provider = make_provider(config.embedding);
      auto idx = std::make_shared<const EmbeddingIndex>(build_index(clean, *provider));
      const auto retriever = topk_retriever(idx, provider, clean.task_ptr(), config.order);
      const auto records = build_training_corpus(clean, retriever, config.n, corpus_rates, config.seed);
      write_training_corpus(output, records, clean.task());
      print({{"records", records.size()}, {"grammar", kRectifierGrammar}});
    } else if (run->parsed() || sweep_cmd->parsed() || stab->parsed()) {
      const std::string_view command = run->parsed() ? "run" : sweep_cmd->parsed() ? "sweep" : "stability";
      const auto exp = Experiment::prepare(config);
      const fs::path dir = config.output_dir;
      const auto partial = partial_path(config, command);
      std::vector<fs::path> outputs;
      if (command == "run") {
        const auto result = evaluate(exp, config.run, &partial);
        outputs.push_back(write_run(dir, result));
        json summary = {{"strategy", result.strategy}, {"rate", result.rate}, {"accuracy", result.accuracy}};
        if (result.rectification_accuracy) summary["rectification_accuracy"] = *result.rectification_accuracy;
        print(summary);
      } else if (command == "sweep") {
        const auto result = sweep(exp, config.run, config.rates, &partial);
        outputs.push_back(write_sweep(dir, result));
        print({{"strategy", result.strategy}, {"series", result.series()}});
      } else {
        RunSettings s = config.run;
        s.mode = CorruptionMode::kPostRetrieval;
        const auto result = stability(exp, s, config.stability_seeds, &partial);
        outputs.push_back(write_stability(dir, result));
        print(result.to_json());
      }
      write_manifest(dir, command, config, outputs);
    } else if (report->parsed()) {
      const auto files = emit_report(output.empty() ? fs::path(config.output_dir) : fs::path(output));
      json series = json::array();
      for (const auto& p : files.series) series.push_back(p.string());
      print({{"summary", files.summary.string()}, {"table", files.table.string()}, {"series", series}});
    }
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kConfig;
  } catch (const BackendError& e) {
    spdlog::error("backend error: {}", e.what());
    return kBackend;
  } catch (const AssertionError& e) {
    spdlog::error("assertion failed: {}", e.what());
    return kAssertion;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kOther;
  }
  return kOk;
}
