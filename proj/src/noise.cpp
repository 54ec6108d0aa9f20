#include "nlicl/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "nlicl/error.hpp"
#include "nlicl/random.hpp"

namespace nlicl {

const Flip* CorruptionPlan::find(std::string_view id) const {
  for (const auto& f : flips) {
    if (f.id == id) return &f;
  }
  return nullptr;
}

nlohmann::json CorruptionPlan::to_json(const LabelSpace& labels) const {
  nlohmann::json flips_json = nlohmann::json::array();
  for (const auto& f : flips) {
    flips_json.push_back({{"id", f.id},
                          {"original", labels.label(f.original)},
                          {"corrupted", labels.label(f.corrupted)}});
  }
  return {{"seed", seed}, {"rate", rate}, {"flips", std::move(flips_json)}};
}

std::size_t scaled_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

Corrupted corrupt_labels(const Dataset& dataset, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ConfigError("noise rate must lie in [0, 1], got " + std::to_string(rate));
  }
  const std::size_t m = dataset.task().label_space().size();
  Rng rng(seed, "corrupt");
  auto picked = rng.sample_without_replacement(dataset.size(), scaled_count(rate, dataset.size()));
  std::sort(picked.begin(), picked.end());

  std::vector<Example> examples(dataset.examples().begin(), dataset.examples().end());
  CorruptionPlan plan{seed, rate, {}};
  plan.flips.reserve(picked.size());
  for (std::size_t idx : picked) {
    Example& ex = examples[idx];
    // Uniform over the m-1 other classes.
    std::size_t target = static_cast<std::size_t>(rng.below(m - 1));
    if (target >= ex.label) ++target;
    plan.flips.push_back({ex.id, ex.label, target});
    ex.label = target;
  }
  return {dataset.with_examples(std::move(examples)), std::move(plan)};
}

CleanSplit split_clean_subset(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("clean fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  const std::size_t k = scaled_count(fraction, dataset.size());
  if (k == 0) {
    throw ConfigError("clean subset would be empty (" + std::to_string(dataset.size()) +
                      " examples, fraction " + std::to_string(fraction) + ")");
  }
  Rng rng(seed, "split");
  std::vector<bool> in_clean(dataset.size(), false);
  for (std::size_t idx : rng.sample_without_replacement(dataset.size(), k)) in_clean[idx] = true;

  std::vector<Example> clean, rest;
  clean.reserve(k);
  rest.reserve(dataset.size() - k);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (in_clean[i] ? clean : rest).push_back(dataset[i]);
  }
  return {dataset.with_examples(std::move(clean)), dataset.with_examples(std::move(rest))};
}

void write_plan(const std::filesystem::path& path, const CorruptionPlan& plan, const LabelSpace& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corruption plan '" + path.string() + "'");
  for (const auto& f : plan.flips) {
    nlohmann::ordered_json j;
    j["id"] = f.id;
    j["original"] = labels.label(f.original);
    j["corrupted"] = labels.label(f.corrupted);
    out << j.dump() << '\n';
  }
}

}  // namespace nlicl
