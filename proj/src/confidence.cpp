#include "nlicl/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "nlicl/error.hpp"
#include "nlicl/kernels.hpp"

namespace nlicl {
namespace {

// log(sum(exp(z))) without overflow.
double log_sum_exp(std::span<const double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - top);
  return top + std::log(s);
}

}  // namespace

ConfidenceEstimate ConfidenceEstimate::softmax(std::span<const double> logits) {
  if (logits.empty()) throw ConfigError("softmax over zero logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  ConfidenceEstimate out;
  out.probs.resize(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp(logits[i] - top);
    total += out.probs[i];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

std::size_t ConfidenceEstimate::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double label_confidence(const ConfidenceEstimate& estimate, std::size_t label_index) {
  if (label_index >= estimate.probs.size()) {
    throw ConfigError("label index " + std::to_string(label_index) + " outside estimate of size " +
                      std::to_string(estimate.probs.size()));
  }
  return estimate.probs[label_index];
}

LinearClassifier::LinearClassifier(std::string provider_tag, std::size_t dim, LabelSpace labels,
                                   std::vector<double> weights, std::vector<double> bias)
    : provider_tag_(std::move(provider_tag)),
      dim_(dim),
      labels_(std::move(labels)),
      weights_(std::move(weights)),
      bias_(std::move(bias)) {
  if (weights_.size() != labels_.size() * dim_ || bias_.size() != labels_.size()) {
    throw DataError("classifier shape does not match " + std::to_string(labels_.size()) + " classes x dim " +
                    std::to_string(dim_));
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights_.begin(), weights_.end(), finite) || !std::all_of(bias_.begin(), bias_.end(), finite)) {
    throw DataError("classifier has non-finite parameters");
  }
}

LinearClassifier LinearClassifier::zeros(std::string provider_tag, std::size_t dim, LabelSpace labels) {
  const std::size_t m = labels.size();
  return LinearClassifier(std::move(provider_tag), dim, std::move(labels), std::vector<double>(m * dim, 0.0),
                          std::vector<double>(m, 0.0));
}

std::vector<double> LinearClassifier::logits(std::span<const double> embedding) const {
  if (embedding.size() != dim_) {
    throw ConfigError("embedding dim " + std::to_string(embedding.size()) + " does not match classifier dim " +
                      std::to_string(dim_));
  }
  std::vector<double> z(classes());
  kernels::gemv(weights_, embedding, z);
  for (std::size_t c = 0; c < z.size(); ++c) z[c] += bias_[c];
  return z;
}

ConfidenceEstimate LinearClassifier::predict(std::span<const double> embedding) const {
  return ConfidenceEstimate::softmax(logits(embedding));
}

nlohmann::json LinearClassifier::to_json() const {
  return {{"format", "nlicl-linear-v1"}, {"provider_tag", provider_tag_}, {"dim", dim_},
          {"labels", labels_.labels()},  {"weights", weights_},           {"bias", bias_}};
}

LinearClassifier LinearClassifier::from_json(const nlohmann::json& j) {
  try {
    return LinearClassifier(j.at("provider_tag").get<std::string>(), j.at("dim").get<std::size_t>(),
                            LabelSpace(j.at("labels").get<std::vector<std::string>>()),
                            j.at("weights").get<std::vector<double>>(), j.at("bias").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid classifier file: ") + e.what());
  }
}

void LinearClassifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write classifier '" + path.string() + "'");
  out << to_json().dump() << '\n';
}

LinearClassifier LinearClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open classifier '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("classifier '" + path.string() + "': " + e.what());
  }
  return from_json(j);
}

SoftmaxObjective::SoftmaxObjective(std::vector<double> features, std::vector<std::size_t> targets,
                                   std::size_t classes, std::size_t dim)
    : features_(std::move(features)), targets_(std::move(targets)), classes_(classes), dim_(dim) {
  if (targets_.empty()) throw ConfigError("training set is empty");
  if (features_.size() != targets_.size() * dim_) throw ConfigError("feature matrix shape mismatch");
  for (auto t : targets_) {
    if (t >= classes_) throw ConfigError("training target out of range");
  }
}

double SoftmaxObjective::loss(std::span<const double> weights, std::span<const double> bias) const {
  std::vector<double> z(classes_);
  double total = 0.0;
  for (std::size_t i = 0; i < rows(); ++i) {
    const auto x = std::span<const double>(features_).subspan(i * dim_, dim_);
    kernels::gemv(weights, x, z);
    for (std::size_t c = 0; c < classes_; ++c) z[c] += bias[c];
    total += log_sum_exp(z) - z[targets_[i]];
  }
  return total / static_cast<double>(rows());
}

double SoftmaxObjective::loss_and_gradient(std::span<const double> weights, std::span<const double> bias,
                                           std::vector<double>& grad_weights, std::vector<double>& grad_bias) const {
  grad_weights.assign(classes_ * dim_, 0.0);
  grad_bias.assign(classes_, 0.0);
  const double inv_n = 1.0 / static_cast<double>(rows());
  std::vector<double> z(classes_);
  double total = 0.0;
  for (std::size_t i = 0; i < rows(); ++i) {
    const auto x = std::span<const double>(features_).subspan(i * dim_, dim_);
    kernels::gemv(weights, x, z);
    for (std::size_t c = 0; c < classes_; ++c) z[c] += bias[c];
    const double lse = log_sum_exp(z);
    total += lse - z[targets_[i]];
    for (std::size_t c = 0; c < classes_; ++c) {
      // d loss_i / d z_c = p_c - [c == y_i]
      const double delta = (std::exp(z[c] - lse) - (c == targets_[i] ? 1.0 : 0.0)) * inv_n;
      grad_bias[c] += delta;
      kernels::axpy(delta, x, std::span<double>(grad_weights).subspan(c * dim_, dim_));
    }
  }
  return total * inv_n;
}

TrainingResult train_on_features(const SoftmaxObjective& objective, std::string provider_tag, LabelSpace labels,
                                 const TrainingOptions& options) {
  if (!(options.learning_rate > 0.0) || !std::isfinite(options.learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (labels.size() != objective.classes()) throw ConfigError("label space does not match objective classes");
  const std::size_t m = objective.classes();
  const std::size_t dim = objective.dim();
  std::vector<double> w(m * dim, 0.0), b(m, 0.0), gw, gb;
  std::vector<double> history;
  history.reserve(options.epochs + 1);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const double loss = objective.loss_and_gradient(w, b, gw, gb);
    if (!std::isfinite(loss)) throw ConfigError("training diverged at epoch " + std::to_string(epoch));
    history.push_back(loss);
    kernels::axpy(-options.learning_rate, gw, w);
    kernels::axpy(-options.learning_rate, gb, b);
  }
  const double final_loss = objective.loss(w, b);
  if (!std::isfinite(final_loss)) throw ConfigError("training diverged at epoch " + std::to_string(options.epochs));
  history.push_back(final_loss);
  return {LinearClassifier(std::move(provider_tag), dim, std::move(labels), std::move(w), std::move(b)),
          std::move(history)};
}

TrainingResult train_classifier(const Dataset& clean, const EmbeddingProvider& provider,
                                const TrainingOptions& options) {
  if (clean.empty()) throw ConfigError("cannot train a classifier on an empty clean subset");
  const std::size_t dim = provider.dim();
  std::vector<double> features;
  std::vector<std::size_t> targets;
  features.reserve(clean.size() * dim);
  std::set<std::size_t> seen;
  for (const auto& ex : clean.examples()) {
    const auto v = embed(provider, clean.task().render_unlabeled(ex));
    features.insert(features.end(), v.values().begin(), v.values().end());
    targets.push_back(ex.label);
    seen.insert(ex.label);
  }
  const auto& labels = clean.task().label_space();
  if (seen.size() < labels.size()) {
    spdlog::warn("clean subset covers only {} of {} classes", seen.size(), labels.size());
  }
  SoftmaxObjective objective(std::move(features), std::move(targets), labels.size(), dim);
  return train_on_features(objective, provider.tag(), labels, options);
}

ConfidenceEstimate predict_confidence(const LinearClassifier& classifier, const Example& example,
                                      const EmbeddingProvider& provider, const TaskTemplate& task) {
  if (classifier.dim() != provider.dim()) {
    throw ConfigError("classifier dim " + std::to_string(classifier.dim()) + " does not match provider dim " +
                      std::to_string(provider.dim()));
  }
  const auto v = embed(provider, task.render_unlabeled(example));
  return classifier.predict(v.values());
}

ClassifierEstimator::ClassifierEstimator(std::shared_ptr<const LinearClassifier> classifier,
                                         std::shared_ptr<const EmbeddingProvider> provider,
                                         std::shared_ptr<const TaskTemplate> task)
    : classifier_(std::move(classifier)), provider_(std::move(provider)), task_(std::move(task)) {
  if (classifier_->provider_tag() != provider_->tag()) {
    throw ConfigError("classifier was trained with provider '" + classifier_->provider_tag() + "', not '" +
                      provider_->tag() + "'");
  }
  if (classifier_->labels() != task_->label_space()) throw ConfigError("classifier labels do not match task");
}

ConfidenceEstimate ClassifierEstimator::estimate(const Example& example) const {
  return predict_confidence(*classifier_, example, *provider_, *task_);
}

OracleEstimator::OracleEstimator(std::unordered_map<std::string, std::size_t> truth, std::size_t classes,
                                 double p_correct, double p_wrong)
    : truth_(std::move(truth)), classes_(classes), p_correct_(p_correct) {
  if (classes_ < 2) throw ConfigError("oracle estimator needs at least 2 classes");
  if (!(p_wrong >= 0.0 && p_wrong < p_correct && p_correct <= 1.0)) {
    throw ConfigError("oracle estimator requires 0 <= p_wrong < p_correct <= 1");
  }
  const double off = (1.0 - p_correct_) / static_cast<double>(classes_ - 1);
  if (off > p_wrong + 1e-12) {
    throw ConfigError("oracle off-label mass " + std::to_string(off) + " exceeds p_wrong " + std::to_string(p_wrong));
  }
}

ConfidenceEstimate OracleEstimator::estimate(const Example& example) const {
  auto it = truth_.find(example.id);
  if (it == truth_.end()) throw DataError("oracle estimator has no ground truth for '" + example.id + "'");
  ConfidenceEstimate out;
  out.probs.assign(classes_, (1.0 - p_correct_) / static_cast<double>(classes_ - 1));
  out.probs[it->second] = p_correct_;
  return out;
}

std::shared_ptr<const ConfidenceEstimator> oracle_estimator(std::unordered_map<std::string, std::size_t> truth,
                                                            std::size_t classes, double p_correct,
                                                            double p_wrong) {
  return std::make_shared<OracleEstimator>(std::move(truth), classes, p_correct, p_wrong);
}

}  // namespace nlicl
