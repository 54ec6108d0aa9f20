#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nlicl/corpus.hpp"

namespace nlicl {

struct Flip {
  std::string id;
  std::size_t original = 0;
  std::size_t corrupted = 0;

  bool operator==(const Flip&) const = default;
};

// Which labels a corruption run flipped. Flips are listed in dataset order.
struct CorruptionPlan {
  std::uint64_t seed = 0;
  double rate = 0.0;
  std::vector<Flip> flips;

  const Flip* find(std::string_view id) const;
  nlohmann::json to_json(const LabelSpace& labels) const;
  bool operator==(const CorruptionPlan&) const = default;
};

struct Corrupted {
  Dataset dataset;
  CorruptionPlan plan;
};

struct CleanSplit {
  Dataset clean;
  Dataset remainder;
};

// floor(fraction * n), tolerant of representation error in `fraction`
// (0.29 * 100 is 28.999999999999996 in binary floating point).
std::size_t scaled_count(double fraction, std::size_t n);

// Flips floor(rate * |D|) labels, chosen uniformly without replacement, each
// to a label drawn uniformly from the other m-1 classes. Fully determined by
// (dataset, rate, seed).
Corrupted corrupt_labels(const Dataset& dataset, double rate, std::uint64_t seed);

// Uniform sample of floor(fraction * |D|) examples as the clean subset; both
// parts keep the dataset's relative order.
CleanSplit split_clean_subset(const Dataset& dataset, double fraction, std::uint64_t seed);

// Audit sidecar: one JSON object per flip {id, original, corrupted} with
// verbalized labels.
void write_plan(const std::filesystem::path& path, const CorruptionPlan& plan, const LabelSpace& labels);

}  // namespace nlicl
