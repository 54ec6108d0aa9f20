#include "nlicl/oracle_backend.hpp"

#include "nlicl/error.hpp"
#include "nlicl/random.hpp"
#include "nlicl/rectifier.hpp"

namespace nlicl {
namespace {

std::vector<std::string_view> split(std::string_view text, std::string_view sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto at = text.find(sep, start);
    if (at == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, at - start));
    start = at + sep.size();
  }
}

}  // namespace

OracleWorld OracleWorld::from_datasets(std::shared_ptr<const TaskTemplate> task,
                                       std::initializer_list<const Dataset*> datasets) {
  OracleWorld world;
  world.task = task;
  for (const Dataset* d : datasets) {
    for (const auto& ex : d->examples()) world.truth.emplace(task->render_unlabeled(ex), ex.label);
  }
  return world;
}

DemoJudge truth_judge(const OracleWorld& world) {
  auto task = world.task;
  auto truth = std::make_shared<const std::unordered_map<std::string, std::size_t>>(world.truth);
  auto suffixes = world.ignorable_suffixes;
  return [task, truth, suffixes](std::string_view block) {
    for (const auto& s : suffixes) {
      if (block.ends_with(s)) {
        block.remove_suffix(s.size());
        break;
      }
    }
    const auto parsed = task->parse_labeled(block);
    if (!parsed) return false;
    auto it = truth->find(parsed->unlabeled);
    return it != truth->end() && it->second == parsed->label;
  };
}

OracleBackend::OracleBackend(OracleWorld world, DemoJudge judge) : world_(std::move(world)), judge_(std::move(judge)) {
  if (!world_.task) throw ConfigError("oracle world needs a task template");
  if (!world_.fidelity) throw ConfigError("oracle world needs a fidelity function");
  if (!(world_.rectifier_fidelity >= 0.0 && world_.rectifier_fidelity <= 1.0)) {
    throw ConfigError("rectifier fidelity must lie in [0, 1]");
  }
  if (!judge_) judge_ = truth_judge(world_);
}

double OracleBackend::query_draw(std::string_view query_render) {
  return unit_interval(mix64(fnv1a64(query_render) ^ 0x6f7261636c652d75ULL));
}

std::size_t OracleBackend::true_label(std::string_view render) const {
  auto it = world_.truth.find(std::string(render));
  if (it == world_.truth.end()) {
    throw DataError("oracle backend has no ground truth for '" + std::string(render.substr(0, 120)) + "'");
  }
  return it->second;
}

std::size_t OracleBackend::wrong_label(std::string_view render, std::size_t truth, std::string_view salt) const {
  const std::size_t m = world_.task->label_space().size();
  auto pick = static_cast<std::size_t>(mix64(fnv1a64(render, fnv1a64(salt))) % (m - 1));
  return pick >= truth ? pick + 1 : pick;
}

std::string OracleBackend::strip_suffixes(std::string_view block) const {
  for (const auto& s : world_.ignorable_suffixes) {
    if (block.ends_with(s)) return std::string(block.substr(0, block.size() - s.size()));
  }
  return std::string(block);
}

double OracleBackend::demo_correct_fraction(std::string_view prompt) const {
  auto parts = split(prompt, world_.task->demo_separator());
  parts.pop_back();  // query
  if (parts.empty()) return 1.0;
  std::size_t good = 0;
  for (auto block : parts) good += judge_(block) ? 1 : 0;
  return static_cast<double>(good) / static_cast<double>(parts.size());
}

std::size_t OracleBackend::intended_label(std::string_view prompt) const {
  const auto parts = split(prompt, world_.task->demo_separator());
  const std::string_view query = parts.back();
  const std::size_t truth = true_label(query);
  const double g = world_.fidelity(demo_correct_fraction(prompt));
  return query_draw(query) < g ? truth : wrong_label(query, truth, "answer");
}

double OracleBackend::score(std::string_view prompt, std::string_view continuation) const {
  std::string_view candidate = continuation;
  const auto& prefix = world_.task->label_prefix();
  if (candidate.starts_with(prefix)) candidate.remove_prefix(prefix.size());
  const auto index = world_.task->label_space().index_of(candidate);
  return index && *index == intended_label(prompt) ? 0.0 : -1.0;
}

std::string OracleBackend::generate(std::string_view prompt, std::size_t, std::span<const std::string>) const {
  const auto& labels = world_.task->label_space();
  if (auto blocks = parse_rectifier_prompt(prompt)) {
    std::vector<std::size_t> out;
    out.reserve(blocks->size());
    for (const auto& block : *blocks) {
      const auto parsed = world_.task->parse_labeled(strip_suffixes(block));
      if (!parsed) throw DataError("oracle backend cannot parse demonstration '" + block.substr(0, 120) + "'");
      const std::size_t truth = true_label(parsed->unlabeled);
      const double draw = unit_interval(mix64(fnv1a64(parsed->unlabeled) ^ 0x7265637469667931ULL));
      out.push_back(draw < world_.rectifier_fidelity ? truth : wrong_label(parsed->unlabeled, truth, "rectify"));
    }
    return canonical_completion(labels, out);
  }
  return world_.task->label_prefix() + labels.label(intended_label(prompt));
}

std::shared_ptr<const ModelBackend> oracle_mock(OracleWorld world, DemoJudge judge) {
  return std::make_shared<OracleBackend>(std::move(world), std::move(judge));
}

}  // namespace nlicl
