#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlicl/backend.hpp"
#include "nlicl/corpus.hpp"
#include "nlicl/retrieval.hpp"

namespace nlicl {

// Sequence-level label rectification.
//
// Prompt grammar "rect-v1" (shared byte-for-byte by corpus building and
// inference):
//
//   Demonstration 1: <labeled render of demo 1>
//   ...
//   Demonstration K: <labeled render of demo K>
//   Corrected labels:
//
// Expected completion: " <label_1>, <label_2>, ..., <label_K>\n".
inline constexpr std::string_view kRectifierGrammar = "rect-v1";
inline constexpr std::string_view kCorrectedLabelsMarker = "Corrected labels:";

std::string build_rectifier_prompt(const TaskTemplate& task, std::span<const Example> demos);
std::string rectifier_prompt_from_blocks(std::span<const std::string> labeled_blocks);
// The labeled demo blocks of a rect-v1 prompt, or nullopt if `prompt` does
// not follow the grammar.
std::optional<std::vector<std::string>> parse_rectifier_prompt(std::string_view prompt);

std::string canonical_completion(const LabelSpace& labels, std::span<const std::size_t> label_indices);
// One entry per expected position; nullopt where the completion has no
// exact label. Text after the first newline is ignored, as are extra items.
std::vector<std::optional<std::size_t>> parse_completion(const LabelSpace& labels, std::string_view completion,
                                                         std::size_t expected);

struct RectifyOptions {
  std::size_t chunk_size = 10;
  // Strict mode raises on any unparseable position instead of keeping the
  // original label.
  bool strict = false;
  std::size_t max_tokens_per_label = 8;
};

struct RectificationResult {
  std::vector<std::size_t> corrected;
  // Positions where the original label was kept because generation was
  // unparseable.
  std::vector<std::size_t> parse_fallbacks;
  std::size_t backend_calls = 0;
};

// Rectifies demos in ceil(K / chunk_size) consecutive chunks, one generate
// call each. Raises BackendError naming the chunk on backend failure, and
// when more than half of all positions fall back.
RectificationResult rectify(const ModelBackend& backend, const TaskTemplate& task, std::span<const Example> demos,
                            const RectifyOptions& options = {});

// demos with their labels replaced by result.corrected.
std::vector<Example> apply_rectification(std::span<const Example> demos, const RectificationResult& result);

struct RectifierRecord {
  std::vector<std::string> inputs;  // label-free renders
  std::vector<std::string> noisy_labels;
  std::vector<std::string> clean_labels;
  double noise_rate_used = 0.0;

  std::string prompt(const TaskTemplate& task) const;
  std::string completion() const;
};

// For every clean example: retrieve its n nearest demos from the clean set
// (excluding itself), draw one rate from `noise_rates` and corrupt the demo
// labels at that rate. Deterministic in (seed, example id).
std::vector<RectifierRecord> build_training_corpus(const Dataset& clean, const Retriever& retriever, std::size_t n,
                                                   std::span<const double> noise_rates, std::uint64_t seed);

// JSONL {prompt, completion}.
void write_training_corpus(const std::filesystem::path& path, std::span<const RectifierRecord> records,
                           const TaskTemplate& task);

// Fraction of positions where predicted equals gold over N sets of K labels.
double rectification_accuracy(std::span<const std::vector<std::size_t>> gold,
                              std::span<const std::vector<std::size_t>> predicted);

}  // namespace nlicl
