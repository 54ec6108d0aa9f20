#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlicl/backend.hpp"
#include "nlicl/corpus.hpp"

namespace nlicl {

// Ground truth and behaviour knobs for OracleBackend.
struct OracleWorld {
  std::shared_ptr<const TaskTemplate> task;
  // Label-free render (of demos and queries) -> true label.
  std::unordered_map<std::string, std::size_t> truth;
  // Probability of answering correctly given the fraction s of correct
  // demonstrations. Must be nondecreasing with values in [0, 1].
  std::function<double(double)> fidelity = [](double s) { return 0.5 + 0.5 * s; };
  // Per-position probability that rectifier output is correct.
  double rectifier_fidelity = 1.0;
  // Suffixes removed from a demo block before judging it (weighting tags).
  std::vector<std::string> ignorable_suffixes = {" (confidence: high)", " (confidence: low)"};

  // Truth for every example of the given datasets, keyed by label-free render.
  static OracleWorld from_datasets(std::shared_ptr<const TaskTemplate> task,
                                   std::initializer_list<const Dataset*> datasets);
};

// Decides whether a labeled demo block carries its true label.
using DemoJudge = std::function<bool(std::string_view labeled_block)>;

// Judge backed by world.truth; blocks that do not parse or are unknown count
// as incorrect.
DemoJudge truth_judge(const OracleWorld& world);

// Deterministic stand-in for an LLM.
//
// Classification prompts: s = fraction of demo blocks the judge accepts (1
// when there are none); u in [0, 1) is hashed from the query render; the
// intended answer is the true label when u < fidelity(s) and otherwise a
// hash-chosen wrong label. score() is 0 for the intended candidate, -1 for
// every other continuation.
//
// rect-v1 prompts: generate() emits the canonical completion of the demos'
// true labels, replacing each with a hash-chosen wrong label when its
// per-demo draw is >= rectifier_fidelity.
class OracleBackend final : public ModelBackend {
 public:
  OracleBackend(OracleWorld world, DemoJudge judge);

  double score(std::string_view prompt, std::string_view continuation) const override;
  std::string generate(std::string_view prompt, std::size_t max_tokens,
                       std::span<const std::string> stop) const override;

  // Exposed for tests.
  double demo_correct_fraction(std::string_view prompt) const;
  std::size_t intended_label(std::string_view prompt) const;
  static double query_draw(std::string_view query_render);

 private:
  std::size_t true_label(std::string_view render) const;
  std::size_t wrong_label(std::string_view render, std::size_t truth, std::string_view salt) const;
  std::string strip_suffixes(std::string_view block) const;

  OracleWorld world_;
  DemoJudge judge_;
};

std::shared_ptr<const ModelBackend> oracle_mock(OracleWorld world, DemoJudge judge = {});

}  // namespace nlicl
