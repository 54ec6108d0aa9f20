#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace nlicl {

// Ordered, distinct, verbalized candidate labels. Index = position.
class LabelSpace {
 public:
  explicit LabelSpace(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t index) const;
  const std::vector<std::string>& labels() const { return labels_; }
  // Exact, case-sensitive lookup.
  std::optional<std::size_t> index_of(std::string_view label) const;
  bool valid(std::size_t index) const { return index < labels_.size(); }

  bool operator==(const LabelSpace&) const = default;

 private:
  std::vector<std::string> labels_;
};

struct Example {
  std::string id;
  std::map<std::string, std::string> fields;
  std::size_t label = 0;

  bool operator==(const Example&) const = default;
};

// Result of splitting a labeled render back into its parts.
struct ParsedRender {
  std::string unlabeled;
  std::size_t label = 0;
};

// A task's input format. The pattern uses `{field}` placeholders for every
// input field and a single trailing `{label}`; `{{` and `}}` are literal
// braces. The label must close the pattern so a label-free render is a
// strict prefix of the labeled one.
class TaskTemplate {
 public:
  TaskTemplate(std::string task_name, std::vector<std::string> input_fields, std::string pattern,
               LabelSpace label_space, std::string demo_separator = "\n\n");

  static TaskTemplate mrpc();
  static TaskTemplate sst5();
  static TaskTemplate tweet();
  // "mrpc", "sst5" (or "sst-5"), "tweet"; throws ConfigError otherwise.
  static TaskTemplate builtin(std::string_view name);
  // {task_name, input_fields, pattern, separator?, labels}
  static TaskTemplate from_json(const nlohmann::json& j);
  // A builtin name or a path to a JSON template file.
  static TaskTemplate resolve(const std::string& name_or_path);
  nlohmann::json to_json() const;

  const std::string& task_name() const { return task_name_; }
  const std::vector<std::string>& input_fields() const { return input_fields_; }
  const std::string& pattern() const { return pattern_; }
  const std::string& demo_separator() const { return demo_separator_; }
  const LabelSpace& label_space() const { return label_space_; }
  // Whitespace separating the label-free render from the label (" " for all
  // builtin templates). Candidates are scored with this prefix.
  const std::string& label_prefix() const { return label_prefix_; }

  std::string render_unlabeled(const Example& example) const;
  std::string render_labeled(const Example& example) const;
  // Inverse of render_labeled: recovers the label-free render and label.
  // `text` may not carry any suffix beyond the label.
  std::optional<ParsedRender> parse_labeled(std::string_view text) const;

  // Throws DataError if `example` lacks a field or has an invalid label.
  void check(const Example& example) const;

 private:
  struct Segment {
    enum class Kind { kLiteral, kField } kind;
    std::string text;  // literal text or field name
  };

  std::string task_name_;
  std::vector<std::string> input_fields_;
  std::string pattern_;
  LabelSpace label_space_;
  std::string demo_separator_;
  std::vector<Segment> segments_;  // everything before {label}
  std::string label_prefix_;
};

// An ordered collection of examples sharing one template. Ids are unique and
// every label is valid; immutable once built.
class Dataset {
 public:
  Dataset(std::shared_ptr<const TaskTemplate> task, std::vector<Example> examples);
  Dataset(const TaskTemplate& task, std::vector<Example> examples)
      : Dataset(std::make_shared<const TaskTemplate>(task), std::move(examples)) {}

  const TaskTemplate& task() const { return *task_; }
  std::shared_ptr<const TaskTemplate> task_ptr() const { return task_; }
  std::span<const Example> examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  const Example* find(std::string_view id) const;
  const Example& at(std::string_view id) const;

  // Same template, different examples.
  Dataset with_examples(std::vector<Example> examples) const {
    return Dataset(task_, std::move(examples));
  }

 private:
  std::shared_ptr<const TaskTemplate> task_;
  std::vector<Example> examples_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// One JSON object per line: the template's input fields as strings, "label"
// holding the verbalized label, and an optional "id" (string or integer;
// defaults to the 1-based line number). Blank lines are skipped.
Dataset load_dataset(const std::filesystem::path& path, const TaskTemplate& task);
Dataset parse_dataset(std::string_view text, const TaskTemplate& task,
                      std::string_view source = "<memory>");
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);

std::string render_example(const TaskTemplate& task, const Example& example, bool include_label);
// Labeled demos joined by the demo separator, then the label-free query.
std::string render_prompt(const TaskTemplate& task, std::span<const Example> demos,
                          const Example& query);
// Same, with demo blocks already rendered.
std::string assemble_prompt(const TaskTemplate& task, std::span<const std::string> demo_blocks,
                            const Example& query);

}  // namespace nlicl
