#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlicl/corpus.hpp"
#include "nlicl/retrieval.hpp"

namespace nlicl {

// A probability simplex over a task's labels.
struct ConfidenceEstimate {
  std::vector<double> probs;

  static ConfidenceEstimate softmax(std::span<const double> logits);
  // Lowest index wins ties.
  std::size_t argmax() const;
};

double label_confidence(const ConfidenceEstimate& estimate, std::size_t label_index);

// Multinomial logistic model softmax(W e + b) over unit embeddings.
class LinearClassifier {
 public:
  LinearClassifier(std::string provider_tag, std::size_t dim, LabelSpace labels, std::vector<double> weights,
                   std::vector<double> bias);
  static LinearClassifier zeros(std::string provider_tag, std::size_t dim, LabelSpace labels);

  const std::string& provider_tag() const { return provider_tag_; }
  std::size_t dim() const { return dim_; }
  std::size_t classes() const { return labels_.size(); }
  const LabelSpace& labels() const { return labels_; }
  std::span<const double> weights() const { return weights_; }  // classes x dim, row-major
  std::span<const double> bias() const { return bias_; }

  std::vector<double> logits(std::span<const double> embedding) const;
  ConfidenceEstimate predict(std::span<const double> embedding) const;

  nlohmann::json to_json() const;
  static LinearClassifier from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static LinearClassifier load(const std::filesystem::path& path);

 private:
  std::string provider_tag_;
  std::size_t dim_;
  LabelSpace labels_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

// Mean cross-entropy of softmax(W x + b) over a fixed design matrix.
class SoftmaxObjective {
 public:
  SoftmaxObjective(std::vector<double> features, std::vector<std::size_t> targets, std::size_t classes,
                   std::size_t dim);

  std::size_t rows() const { return targets_.size(); }
  std::size_t classes() const { return classes_; }
  std::size_t dim() const { return dim_; }

  double loss(std::span<const double> weights, std::span<const double> bias) const;
  // Fills the gradients (resized as needed) and returns the loss.
  double loss_and_gradient(std::span<const double> weights, std::span<const double> bias,
                           std::vector<double>& grad_weights, std::vector<double>& grad_bias) const;

 private:
  std::vector<double> features_;
  std::vector<std::size_t> targets_;
  std::size_t classes_;
  std::size_t dim_;
};

struct TrainingOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.1;
  // Full-batch descent consumes no randomness; kept in the artifact key.
  std::uint64_t seed = 0;
};

struct TrainingResult {
  LinearClassifier classifier;
  // loss_history[k] is the loss after k epochs; size epochs + 1.
  std::vector<double> loss_history;
};

// Gradient descent from zero weights. Throws ConfigError naming the epoch if
// the loss becomes non-finite.
TrainingResult train_on_features(const SoftmaxObjective& objective, std::string provider_tag, LabelSpace labels,
                                 const TrainingOptions& options);
TrainingResult train_classifier(const Dataset& clean, const EmbeddingProvider& provider,
                                const TrainingOptions& options = {});

ConfidenceEstimate predict_confidence(const LinearClassifier& classifier, const Example& example,
                                      const EmbeddingProvider& provider, const TaskTemplate& task);

// Source of per-demonstration label probabilities for the manipulation
// strategies.
class ConfidenceEstimator {
 public:
  virtual ~ConfidenceEstimator() = default;
  virtual ConfidenceEstimate estimate(const Example& example) const = 0;
};

class ClassifierEstimator final : public ConfidenceEstimator {
 public:
  ClassifierEstimator(std::shared_ptr<const LinearClassifier> classifier,
                      std::shared_ptr<const EmbeddingProvider> provider, std::shared_ptr<const TaskTemplate> task);
  ConfidenceEstimate estimate(const Example& example) const override;

 private:
  std::shared_ptr<const LinearClassifier> classifier_;
  std::shared_ptr<const EmbeddingProvider> provider_;
  std::shared_ptr<const TaskTemplate> task_;
};

// Test double: p_correct on the true label, (1 - p_correct)/(m - 1) on each
// other label. Requires 0 <= p_wrong < p_correct <= 1 and the off-label mass
// not to exceed p_wrong.
class OracleEstimator final : public ConfidenceEstimator {
 public:
  OracleEstimator(std::unordered_map<std::string, std::size_t> truth, std::size_t classes, double p_correct,
                  double p_wrong);
  ConfidenceEstimate estimate(const Example& example) const override;

 private:
  std::unordered_map<std::string, std::size_t> truth_;
  std::size_t classes_;
  double p_correct_;
};

std::shared_ptr<const ConfidenceEstimator> oracle_estimator(std::unordered_map<std::string, std::size_t> truth,
                                                            std::size_t classes, double p_correct,
                                                            double p_wrong);

}  // namespace nlicl
