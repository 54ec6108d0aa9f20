#include "nlicl/rectifier.hpp"

#include <fstream>
#include <unordered_set>

#include "nlicl/error.hpp"
#include "nlicl/noise.hpp"
#include "nlicl/random.hpp"

namespace nlicl {
namespace {

std::string demo_marker(std::size_t k) { return "Demonstration " + std::to_string(k) + ": "; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string rectifier_prompt_from_blocks(std::span<const std::string> labeled_blocks) {
  if (labeled_blocks.empty()) throw ConfigError("rectifier prompt needs at least one demonstration");
  std::string out;
  for (std::size_t k = 0; k < labeled_blocks.size(); ++k) {
    out += demo_marker(k + 1);
    out += labeled_blocks[k];
    out += '\n';
  }
  out += kCorrectedLabelsMarker;
  return out;
}

std::string build_rectifier_prompt(const TaskTemplate& task, std::span<const Example> demos) {
  std::vector<std::string> blocks;
  blocks.reserve(demos.size());
  for (const auto& d : demos) blocks.push_back(task.render_labeled(d));
  return rectifier_prompt_from_blocks(blocks);
}

std::optional<std::vector<std::string>> parse_rectifier_prompt(std::string_view prompt) {
  const std::string tail = "\n" + std::string(kCorrectedLabelsMarker);
  if (!prompt.ends_with(tail)) return std::nullopt;
  prompt.remove_suffix(tail.size());
  std::string first = demo_marker(1);
  if (!prompt.starts_with(first)) return std::nullopt;
  std::vector<std::string> blocks;
  std::size_t start = first.size();
  for (std::size_t k = 2;; ++k) {
    const std::string next = "\n" + demo_marker(k);
    const auto at = prompt.find(next, start);
    if (at == std::string_view::npos) {
      blocks.emplace_back(prompt.substr(start));
      break;
    }
    blocks.emplace_back(prompt.substr(start, at - start));
    start = at + next.size();
  }
  return blocks;
}

std::string canonical_completion(const LabelSpace& labels, std::span<const std::size_t> label_indices) {
  std::string out;
  for (std::size_t i = 0; i < label_indices.size(); ++i) {
    out += i == 0 ? " " : ", ";
    out += labels.label(label_indices[i]);
  }
  return out + "\n";
}

std::vector<std::optional<std::size_t>> parse_completion(const LabelSpace& labels, std::string_view completion,
                                                         std::size_t expected) {
  if (auto nl = completion.find('\n'); nl != std::string_view::npos) completion = completion.substr(0, nl);
  std::vector<std::optional<std::size_t>> out(expected);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < expected && pos <= completion.size(); ++i) {
    auto comma = completion.find(',', pos);
    if (comma == std::string_view::npos) comma = completion.size();
    out[i] = labels.index_of(trim(completion.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

RectificationResult rectify(const ModelBackend& backend, const TaskTemplate& task, std::span<const Example> demos,
                            const RectifyOptions& options) {
  if (options.chunk_size < 1) throw ConfigError("rectifier chunk_size must be >= 1");
  RectificationResult result;
  result.corrected.reserve(demos.size());
  const std::vector<std::string> stop{"\n"};
  for (std::size_t start = 0, chunk = 0; start < demos.size(); start += options.chunk_size, ++chunk) {
    const auto part = demos.subspan(start, std::min(options.chunk_size, demos.size() - start));
    std::string text;
    try {
      text = backend.generate(build_rectifier_prompt(task, part), options.max_tokens_per_label * part.size(), stop);
    } catch (const BackendError& e) {
      throw BackendError("rectifier chunk " + std::to_string(chunk) + ": " + e.what(), e.retryable());
    }
    ++result.backend_calls;
    const auto parsed = parse_completion(task.label_space(), text, part.size());
    for (std::size_t i = 0; i < part.size(); ++i) {
      if (parsed[i]) {
        result.corrected.push_back(*parsed[i]);
        continue;
      }
      if (options.strict) {
        throw BackendError("rectifier chunk " + std::to_string(chunk) + ": unparseable label at position " +
                               std::to_string(start + i) + " in '" + text.substr(0, 200) + "'",
                           false);
      }
      result.corrected.push_back(part[i].label);
      result.parse_fallbacks.push_back(start + i);
    }
  }
  if (2 * result.parse_fallbacks.size() > demos.size()) {
    throw BackendError("systematic rectifier parse failure: " + std::to_string(result.parse_fallbacks.size()) +
                           " of " + std::to_string(demos.size()) + " positions unparseable",
                       false);
  }
  return result;
}

std::vector<Example> apply_rectification(std::span<const Example> demos, const RectificationResult& result) {
  if (result.corrected.size() != demos.size()) throw AssertionError("rectification result size mismatch");
  std::vector<Example> out(demos.begin(), demos.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].label = result.corrected[i];
  return out;
}

std::string RectifierRecord::prompt(const TaskTemplate& task) const {
  std::vector<std::string> blocks;
  blocks.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) blocks.push_back(inputs[i] + task.label_prefix() + noisy_labels[i]);
  return rectifier_prompt_from_blocks(blocks);
}

std::string RectifierRecord::completion() const {
  std::string out;
  for (std::size_t i = 0; i < clean_labels.size(); ++i) {
    out += i == 0 ? " " : ", ";
    out += clean_labels[i];
  }
  return out + "\n";
}

std::vector<RectifierRecord> build_training_corpus(const Dataset& clean, const Retriever& retriever, std::size_t n,
                                                   std::span<const double> noise_rates, std::uint64_t seed) {
  if (n < 1) throw ConfigError("rectifier corpus needs n >= 1");
  if (clean.size() < n + 1) {
    throw ConfigError("retrieval shortfall: clean subset has " + std::to_string(clean.size()) +
                      " examples, need at least " + std::to_string(n + 1));
  }
  if (noise_rates.empty()) throw ConfigError("noise_rates is empty");
  for (double r : noise_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("noise rate outside [0, 1]");
  }
  const auto& task = clean.task();
  const auto& labels = task.label_space();
  std::vector<RectifierRecord> records;
  records.reserve(clean.size());
  for (const auto& query : clean.examples()) {
    const auto ids = retriever(query, n, {query.id});
    if (ids.size() != n) throw DataError("retriever returned " + std::to_string(ids.size()) + " ids for '" + query.id + "'");
    std::vector<Example> demos;
    demos.reserve(n);
    for (const auto& id : ids) demos.push_back(clean.at(id));

    Rng rate_rng(seed, "rect-rate:" + query.id);
    const double rate = noise_rates[static_cast<std::size_t>(rate_rng.below(noise_rates.size()))];
    const auto corrupted = corrupt_labels(clean.with_examples(demos), rate, derive_seed(seed, "rect:" + query.id));

    RectifierRecord rec;
    rec.noise_rate_used = rate;
    for (std::size_t i = 0; i < n; ++i) {
      rec.inputs.push_back(task.render_unlabeled(demos[i]));
      rec.clean_labels.push_back(labels.label(demos[i].label));
      rec.noisy_labels.push_back(labels.label(corrupted.dataset[i].label));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_training_corpus(const std::filesystem::path& path, std::span<const RectifierRecord> records,
                           const TaskTemplate& task) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write rectifier corpus '" + path.string() + "'");
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["prompt"] = r.prompt(task);
    j["completion"] = r.completion();
    out << j.dump() << '\n';
  }
}

double rectification_accuracy(std::span<const std::vector<std::size_t>> gold,
                              std::span<const std::vector<std::size_t>> predicted) {
  if (gold.empty()) throw ConfigError("rectification accuracy needs at least one set");
  if (gold.size() != predicted.size()) throw ConfigError("gold and predicted hold different numbers of sets");
  const std::size_t k = gold.front().size();
  if (k == 0) throw ConfigError("demonstration sets are empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != k || predicted[i].size() != k) {
      throw ConfigError("set " + std::to_string(i) + " does not have " + std::to_string(k) + " labels");
    }
    for (std::size_t j = 0; j < k; ++j) hits += gold[i][j] == predicted[i][j];
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size() * k);
}

}  // namespace nlicl
