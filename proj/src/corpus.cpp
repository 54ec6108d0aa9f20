#include "nlicl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "nlicl/error.hpp"

namespace nlicl {
namespace {

constexpr std::string_view kLabelPlaceholder = "label";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string rstrip(std::string s) {
  while (!s.empty() && is_space(s.back())) s.pop_back();
  return s;
}

}  // namespace

LabelSpace::LabelSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) throw ConfigError("label space needs at least 2 labels");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) throw ConfigError("label space contains an empty label");
    if (!seen.insert(l).second) throw ConfigError("duplicate label '" + l + "'");
  }
}

const std::string& LabelSpace::label(std::size_t index) const {
  if (index >= labels_.size()) {
    throw DataError("label index " + std::to_string(index) + " out of range");
  }
  return labels_[index];
}

std::optional<std::size_t> LabelSpace::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  return std::nullopt;
}

TaskTemplate::TaskTemplate(std::string task_name, std::vector<std::string> input_fields,
                           std::string pattern, LabelSpace label_space,
                           std::string demo_separator)
    : task_name_(std::move(task_name)),
      input_fields_(std::move(input_fields)),
      pattern_(std::move(pattern)),
      label_space_(std::move(label_space)),
      demo_separator_(std::move(demo_separator)) {
  if (input_fields_.empty()) throw ConfigError("template '" + task_name_ + "' has no input fields");
  std::map<std::string, int> uses;
  for (const auto& f : input_fields_) {
    if (f == kLabelPlaceholder) throw ConfigError("'label' cannot be an input field name");
    if (!uses.emplace(f, 0).second) throw ConfigError("duplicate input field '" + f + "'");
  }

  std::string literal;
  bool saw_label = false;
  auto flush = [&] {
    if (!literal.empty()) segments_.push_back({Segment::Kind::kLiteral, std::move(literal)});
    literal.clear();
  };
  for (std::size_t i = 0; i < pattern_.size(); ++i) {
    const char c = pattern_[i];
    if (saw_label) throw ConfigError("template '" + task_name_ + "': {label} must end the pattern");
    if (c == '{' && i + 1 < pattern_.size() && pattern_[i + 1] == '{') {
      literal += '{';
      ++i;
    } else if (c == '}' && i + 1 < pattern_.size() && pattern_[i + 1] == '}') {
      literal += '}';
      ++i;
    } else if (c == '{') {
      const auto close = pattern_.find('}', i);
      if (close == std::string::npos) throw ConfigError("template '" + task_name_ + "': unclosed '{'");
      std::string name = pattern_.substr(i + 1, close - i - 1);
      i = close;
      if (name == kLabelPlaceholder) {
        saw_label = true;
        continue;
      }
      auto it = uses.find(name);
      if (it == uses.end()) {
        throw ConfigError("template '" + task_name_ + "': unknown placeholder {" + name + "}");
      }
      if (++it->second > 1) {
        throw ConfigError("template '" + task_name_ + "': field {" + name + "} used twice");
      }
      flush();
      segments_.push_back({Segment::Kind::kField, std::move(name)});
    } else if (c == '}') {
      throw ConfigError("template '" + task_name_ + "': stray '}'");
    } else {
      literal += c;
    }
  }
  if (!saw_label) throw ConfigError("template '" + task_name_ + "': pattern lacks {label}");
  for (const auto& [name, n] : uses) {
    if (n == 0) throw ConfigError("template '" + task_name_ + "': field {" + name + "} unused");
  }
  // Trailing whitespace of the final literal separates the label.
  std::size_t cut = literal.size();
  while (cut > 0 && is_space(literal[cut - 1])) --cut;
  label_prefix_ = literal.substr(cut);
  literal.resize(cut);
  flush();
}

TaskTemplate TaskTemplate::mrpc() {
  return TaskTemplate("mrpc", {"sentence1", "sentence2"}, "{sentence1} Can we say \"{sentence2}\"? {label}",
                      LabelSpace({"No", "Yes"}));
}

TaskTemplate TaskTemplate::sst5() {
  return TaskTemplate("sst5", {"sentence"}, "{sentence} It is {label}",
                      LabelSpace({"terrible", "bad", "OK", "good", "great"}));
}

TaskTemplate TaskTemplate::tweet() {
  return TaskTemplate("tweet", {"question"}, "Tweet: {question}\nHate: {label}", LabelSpace({"No", "Yes"}));
}

TaskTemplate TaskTemplate::builtin(std::string_view name) {
  if (name == "mrpc") return mrpc();
  if (name == "sst5" || name == "sst-5") return sst5();
  if (name == "tweet") return tweet();
  throw ConfigError("unknown builtin template '" + std::string(name) + "'");
}

TaskTemplate TaskTemplate::from_json(const nlohmann::json& j) {
  try {
    return TaskTemplate(j.at("task_name").get<std::string>(),
                        j.at("input_fields").get<std::vector<std::string>>(),
                        j.at("pattern").get<std::string>(),
                        LabelSpace(j.at("labels").get<std::vector<std::string>>()),
                        j.value("separator", std::string("\n\n")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid template definition: ") + e.what());
  }
}

TaskTemplate TaskTemplate::resolve(const std::string& name_or_path) {
  if (name_or_path == "mrpc" || name_or_path == "sst5" || name_or_path == "sst-5" ||
      name_or_path == "tweet") {
    return builtin(name_or_path);
  }
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("cannot open template file '" + name_or_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("template file '" + name_or_path + "': " + e.what());
  }
  return from_json(j);
}

nlohmann::json TaskTemplate::to_json() const {
  return {{"task_name", task_name_},
          {"input_fields", input_fields_},
          {"pattern", pattern_},
          {"separator", demo_separator_},
          {"labels", label_space_.labels()}};
}

void TaskTemplate::check(const Example& example) const {
  for (const auto& f : input_fields_) {
    if (!example.fields.contains(f)) {
      throw DataError("example '" + example.id + "' is missing field '" + f + "'");
    }
  }
  if (!label_space_.valid(example.label)) {
    throw DataError("example '" + example.id + "' has invalid label index " +
                    std::to_string(example.label));
  }
}

std::string TaskTemplate::render_unlabeled(const Example& example) const {
  std::string out;
  for (const auto& seg : segments_) {
    if (seg.kind == Segment::Kind::kLiteral) {
      out += seg.text;
    } else {
      auto it = example.fields.find(seg.text);
      if (it == example.fields.end()) {
        throw DataError("example '" + example.id + "' is missing field '" + seg.text + "'");
      }
      out += it->second;
    }
  }
  return rstrip(std::move(out));
}

std::string TaskTemplate::render_labeled(const Example& example) const {
  return render_unlabeled(example) + label_prefix_ + label_space_.label(example.label);
}

std::optional<ParsedRender> TaskTemplate::parse_labeled(std::string_view text) const {
  std::optional<ParsedRender> best;
  std::size_t best_len = 0;
  for (std::size_t i = 0; i < label_space_.size(); ++i) {
    const std::string suffix = label_prefix_ + label_space_.label(i);
    if (text.size() >= suffix.size() && text.ends_with(suffix) && suffix.size() > best_len) {
      best_len = suffix.size();
      best = ParsedRender{std::string(text.substr(0, text.size() - suffix.size())), i};
    }
  }
  return best;
}

Dataset::Dataset(std::shared_ptr<const TaskTemplate> task, std::vector<Example> examples)
    : task_(std::move(task)), examples_(std::move(examples)) {
  by_id_.reserve(examples_.size());
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    task_->check(examples_[i]);
    if (!by_id_.emplace(examples_[i].id, i).second) {
      throw DataError("duplicate example id '" + examples_[i].id + "'");
    }
  }
}

const Example* Dataset::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &examples_[it->second];
}

const Example& Dataset::at(std::string_view id) const {
  if (const Example* e = find(id)) return *e;
  throw DataError("unknown example id '" + std::string(id) + "'");
}

Dataset parse_dataset(std::string_view text, const TaskTemplate& task, std::string_view source) {
  std::vector<Example> examples;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (std::all_of(line.begin(), line.end(), is_space)) continue;

    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": record is not an object");

    Example ex;
    if (auto it = j.find("id"); it != j.end()) {
      if (it->is_string()) {
        ex.id = it->get<std::string>();
      } else if (it->is_number_integer()) {
        ex.id = std::to_string(it->get<long long>());
      } else {
        throw DataError(where + ": 'id' must be a string or integer");
      }
    } else {
      ex.id = std::to_string(line_no);
    }
    for (const auto& f : task.input_fields()) {
      auto it = j.find(f);
      if (it == j.end()) throw DataError(where + ": missing field '" + f + "'");
      if (!it->is_string()) throw DataError(where + ": field '" + f + "' is not a string");
      ex.fields.emplace(f, it->get<std::string>());
    }
    auto lab = j.find("label");
    if (lab == j.end() || !lab->is_string()) throw DataError(where + ": missing string 'label'");
    const auto label_text = lab->get<std::string>();
    auto index = task.label_space().index_of(label_text);
    if (!index) throw DataError(where + ": unknown label '" + label_text + "'");
    ex.label = *index;
    if (!ids.insert(ex.id).second) throw DataError(where + ": duplicate id '" + ex.id + "'");
    examples.push_back(std::move(ex));
  }
  return Dataset(task, std::move(examples));
}

Dataset load_dataset(const std::filesystem::path& path, const TaskTemplate& task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), task, path.string());
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset '" + path.string() + "'");
  for (const auto& ex : dataset.examples()) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    for (const auto& f : dataset.task().input_fields()) j[f] = ex.fields.at(f);
    j["label"] = dataset.task().label_space().label(ex.label);
    out << j.dump() << '\n';
  }
}

std::string render_example(const TaskTemplate& task, const Example& example, bool include_label) {
  return include_label ? task.render_labeled(example) : task.render_unlabeled(example);
}

std::string assemble_prompt(const TaskTemplate& task, std::span<const std::string> demo_blocks,
                            const Example& query) {
  std::string out;
  for (const auto& block : demo_blocks) {
    out += block;
    out += task.demo_separator();
  }
  out += task.render_unlabeled(query);
  return out;
}

std::string render_prompt(const TaskTemplate& task, std::span<const Example> demos,
                          const Example& query) {
  std::vector<std::string> blocks;
  blocks.reserve(demos.size());
  for (const auto& d : demos) blocks.push_back(task.render_labeled(d));
  return assemble_prompt(task, blocks, query);
}

}  // namespace nlicl
