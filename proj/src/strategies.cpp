#include "nlicl/strategies.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "nlicl/error.hpp"

namespace nlicl {
namespace {

ConfidenceEstimate estimate_for(const ConfidenceEstimator& estimator, const Example& demo) {
  try {
    return estimator.estimate(demo);
  } catch (const BackendError& e) {
    throw BackendError("confidence estimate for demo '" + demo.id + "': " + e.what(), e.retryable());
  } catch (const ConfigError& e) {
    throw ConfigError("confidence estimate for demo '" + demo.id + "': " + e.what());
  } catch (const Error& e) {
    throw DataError("confidence estimate for demo '" + demo.id + "': " + e.what());
  }
}

}  // namespace

StrategyKind parse_strategy(std::string_view name) {
  if (name == "none") return StrategyKind::kNone;
  if (name == "correction") return StrategyKind::kCorrection;
  if (name == "weighting") return StrategyKind::kWeighting;
  if (name == "reordering") return StrategyKind::kReordering;
  if (name == "selection") return StrategyKind::kSelection;
  if (name == "rectification") return StrategyKind::kRectification;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kNone:
      return "none";
    case StrategyKind::kCorrection:
      return "correction";
    case StrategyKind::kWeighting:
      return "weighting";
    case StrategyKind::kReordering:
      return "reordering";
    case StrategyKind::kSelection:
      return "selection";
    case StrategyKind::kRectification:
      return "rectification";
  }
  return "none";
}

std::string WeightingFormat::suffix(std::string_view tag) const {
  std::string out = pattern;
  if (auto at = out.find("{tag}"); at != std::string::npos) out.replace(at, 5, tag);
  return out;
}

std::vector<AnnotatedDemo> annotate(std::span<const Example> demos, const ConfidenceEstimator& estimator) {
  std::vector<AnnotatedDemo> out;
  out.reserve(demos.size());
  for (const auto& d : demos) {
    out.push_back({d, label_confidence(estimate_for(estimator, d), d.label), std::nullopt});
  }
  return out;
}

std::vector<AnnotatedDemo> apply_none(std::span<const Example> demos) {
  std::vector<AnnotatedDemo> out;
  out.reserve(demos.size());
  for (const auto& d : demos) out.push_back({d, std::nullopt, std::nullopt});
  return out;
}

std::vector<AnnotatedDemo> apply_none(std::vector<AnnotatedDemo> demos) { return demos; }

std::vector<AnnotatedDemo> apply_correction(std::span<const Example> demos, const ConfidenceEstimator& estimator) {
  std::vector<AnnotatedDemo> out;
  out.reserve(demos.size());
  for (const auto& d : demos) {
    const auto est = estimate_for(estimator, d);
    AnnotatedDemo a{d, std::nullopt, std::nullopt};
    a.example.label = est.argmax();
    a.confidence = label_confidence(est, a.example.label);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<AnnotatedDemo> apply_weighting(std::span<const Example> demos, const ConfidenceEstimator& estimator,
                                           double high_threshold, const WeightingFormat& format) {
  if (!(high_threshold > 0.0 && high_threshold < 1.0)) {
    throw ConfigError("weighting threshold must lie in (0, 1)");
  }
  auto out = annotate(demos, estimator);
  for (auto& a : out) a.verbal_tag = *a.confidence >= high_threshold ? format.high : format.low;
  return out;
}

std::vector<AnnotatedDemo> apply_reordering(std::span<const Example> demos, const ConfidenceEstimator& estimator) {
  auto out = annotate(demos, estimator);
  std::stable_sort(out.begin(), out.end(),
                   [](const AnnotatedDemo& a, const AnnotatedDemo& b) { return *a.confidence < *b.confidence; });
  return out;
}

std::vector<AnnotatedDemo> apply_selection(std::span<const Example> demos, const ConfidenceEstimator& estimator,
                                           double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("selection theta must lie in [0, 1]");
  auto all = annotate(demos, estimator);
  std::vector<AnnotatedDemo> out;
  for (auto& a : all) {
    if (*a.confidence >= theta) out.push_back(std::move(a));
  }
  if (out.empty() && !demos.empty()) {
    spdlog::warn("selection kept none of {} demonstrations; prompt is zero-shot", demos.size());
  }
  return out;
}

std::string render_demo(const TaskTemplate& task, const AnnotatedDemo& demo, const WeightingFormat& format) {
  std::string out = task.render_labeled(demo.example);
  if (demo.verbal_tag) out += format.suffix(*demo.verbal_tag);
  return out;
}

std::string render_annotated_prompt(const TaskTemplate& task, std::span<const AnnotatedDemo> demos,
                                    const Example& query, const WeightingFormat& format) {
  std::vector<std::string> blocks;
  blocks.reserve(demos.size());
  for (const auto& d : demos) blocks.push_back(render_demo(task, d, format));
  return assemble_prompt(task, blocks, query);
}

std::string strip_weighting_tag(std::string_view block, const WeightingFormat& format) {
  for (const auto& tag : {format.high, format.low}) {
    const auto s = format.suffix(tag);
    if (block.ends_with(s)) return std::string(block.substr(0, block.size() - s.size()));
  }
  return std::string(block);
}

}  // namespace nlicl
