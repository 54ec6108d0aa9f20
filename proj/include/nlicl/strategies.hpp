#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlicl/confidence.hpp"
#include "nlicl/corpus.hpp"

namespace nlicl {

struct AnnotatedDemo {
  Example example;
  // Estimator probability of the demo's current label; unset when no
  // estimator was consulted.
  std::optional<double> confidence;
  // Set only by weighting ("high" / "low").
  std::optional<std::string> verbal_tag;

  bool operator==(const AnnotatedDemo&) const = default;
};

enum class StrategyKind { kNone, kCorrection, kWeighting, kReordering, kSelection, kRectification };

StrategyKind parse_strategy(std::string_view name);
std::string_view strategy_name(StrategyKind kind);

// Surface form of the weighting tag, appended right after the label.
struct WeightingFormat {
  std::string pattern = " (confidence: {tag})";
  std::string high = "high";
  std::string low = "low";

  std::string suffix(std::string_view tag) const;
};

std::vector<AnnotatedDemo> annotate(std::span<const Example> demos, const ConfidenceEstimator& estimator);

std::vector<AnnotatedDemo> apply_none(std::span<const Example> demos);
std::vector<AnnotatedDemo> apply_none(std::vector<AnnotatedDemo> demos);

// Every label replaced by the estimator's argmax (lowest index on ties).
std::vector<AnnotatedDemo> apply_correction(std::span<const Example> demos, const ConfidenceEstimator& estimator);

// Tags "high" when confidence >= high_threshold, else "low".
std::vector<AnnotatedDemo> apply_weighting(std::span<const Example> demos, const ConfidenceEstimator& estimator,
                                           double high_threshold = 0.5,
                                           const WeightingFormat& format = {});

// Stable sort by ascending confidence: low-confidence demos first, the most
// trusted nearest the query.
std::vector<AnnotatedDemo> apply_reordering(std::span<const Example> demos, const ConfidenceEstimator& estimator);

// Keeps demos with confidence >= theta in their original order. May return
// fewer demos than given, including none.
std::vector<AnnotatedDemo> apply_selection(std::span<const Example> demos, const ConfidenceEstimator& estimator,
                                           double theta = 0.3);

std::string render_demo(const TaskTemplate& task, const AnnotatedDemo& demo, const WeightingFormat& format = {});
std::string render_annotated_prompt(const TaskTemplate& task, std::span<const AnnotatedDemo> demos,
                                    const Example& query, const WeightingFormat& format = {});
// Removes a trailing weighting tag, if any.
std::string strip_weighting_tag(std::string_view block, const WeightingFormat& format = {});

}  // namespace nlicl
