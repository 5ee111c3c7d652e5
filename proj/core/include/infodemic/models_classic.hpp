#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "infodemic/container.hpp"
#include "infodemic/features.hpp"
#include "infodemic/model_kind.hpp"

namespace infodemic {

enum class DistanceMetric { cosine, euclidean };

struct ClassicHyperparameters {
  double nb_alpha = 1.0;
  std::size_t knn_k = 6;
  /// Unset: cosine for TF-IDF, Euclidean for embeddings.
  std::optional<DistanceMetric> knn_metric;
  std::size_t rf_trees = 64;
  std::size_t rf_min_leaf = 1;
  /// 0 means floor(sqrt(d)).
  std::size_t rf_max_features = 0;
  /// 0 means unlimited.
  std::size_t rf_max_depth = 0;
  std::size_t gb_estimators = 100;
  double gb_learning_rate = 0.1;
  std::size_t gb_max_depth = 3;
  /// Threads used to grow forest trees.
  std::size_t workers = 1;
};

struct FitReport {
  ModelKind model = ModelKind::multinomial_nb;
  FeatureKind features = FeatureKind::tfidf;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> hyperparameters;
  /// Defaults chosen here for settings the model description leaves open.
  std::vector<std::string> assumptions;
  std::vector<std::string> warnings;
};

/// Per row: predicted label and the two class scores (probabilities or vote
/// fractions) indexed by label. Scores in a row sum to 1.
struct Prediction {
  std::vector<int> labels;
  std::vector<std::array<double, 2>> scores;
};

/// Uniform fit/predict interface shared by the four conventional classifiers.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual ModelKind kind() const = 0;
  FeatureKind feature_kind() const noexcept { return features_; }
  /// Feature dimension seen at fit time (0 before fitting).
  std::size_t dimension() const noexcept { return dimension_; }

  /// Labels must be kFake/kReal and one per row.
  FitReport fit(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t seed);
  /// Throws ShapeError when x.cols() differs from dimension().
  Prediction predict(const SparseMatrix& x) const;

  /// Per-feature importance, or nullopt for models without one.
  virtual std::optional<std::vector<double>> feature_importances() const { return std::nullopt; }

  /// Architecture JSON plus learned tensors.
  ModelContainer to_container(std::uint64_t vocabulary_hash, std::uint64_t pipeline_hash) const;

 protected:
  explicit Classifier(FeatureKind features, ClassicHyperparameters hp) : features_(features), hp_(hp) {}

  virtual void fit_impl(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t seed, FitReport& report) = 0;
  virtual Prediction predict_impl(const SparseMatrix& x) const = 0;
  virtual void save_tensors(std::vector<StoredTensor>& out) const = 0;
  virtual void load_tensors(const ModelContainer& c) = 0;
  virtual void describe(FitReport& report) const = 0;

  FeatureKind features_;
  ClassicHyperparameters hp_;
  std::size_t dimension_ = 0;

  friend std::unique_ptr<Classifier> load_classifier(const ModelContainer& container);
};

std::unique_ptr<Classifier> make_classifier(ModelKind kind, FeatureKind features, ClassicHyperparameters hp = {});
/// Rebuilds a fitted classifier from a container written by to_container().
std::unique_ptr<Classifier> load_classifier(const ModelContainer& container);

/// Binary decision tree as flat node arrays. Internal nodes send x[feature] <=
/// threshold to `left`; leaves have feature = -1 and carry `value`.
struct DecisionTree {
  std::vector<std::int32_t> feature;
  std::vector<double> threshold;
  std::vector<std::int32_t> left;
  std::vector<std::int32_t> right;
  std::vector<double> value;
  /// Weighted impurity decrease per node (0 for leaves); feeds importances.
  std::vector<double> gain;

  std::size_t size() const noexcept { return feature.size(); }
  std::size_t depth() const;
  double evaluate(std::span<const SparseEntry> row) const;
};

/// In-bag multiplicities of one bootstrap draw of n rows from `rng`.
std::vector<std::uint32_t> bootstrap_counts(std::size_t n, Rng& rng);

class MultinomialNB final : public Classifier {
 public:
  explicit MultinomialNB(ClassicHyperparameters hp = {}) : Classifier(FeatureKind::tfidf, hp) {}
  ModelKind kind() const override { return ModelKind::multinomial_nb; }

  const std::array<double, 2>& log_prior() const noexcept { return log_prior_; }
  /// log P(feature | class), [2][dimension].
  const std::array<std::vector<double>, 2>& log_likelihood() const noexcept { return log_likelihood_; }
  /// |log P(f | real) - log P(f | fake)|.
  std::optional<std::vector<double>> feature_importances() const override;

 private:
  std::array<double, 2> log_prior_{};
  std::array<std::vector<double>, 2> log_likelihood_;

  void fit_impl(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t seed, FitReport& report) override;
  Prediction predict_impl(const SparseMatrix& x) const override;
  void save_tensors(std::vector<StoredTensor>& out) const override;
  void load_tensors(const ModelContainer& c) override;
  void describe(FitReport& report) const override;
};

class KNearestNeighbors final : public Classifier {
 public:
  KNearestNeighbors(FeatureKind features, ClassicHyperparameters hp = {}) : Classifier(features, hp) {}
  ModelKind kind() const override { return ModelKind::knn; }
  DistanceMetric metric() const noexcept;

 private:
  SparseMatrix train_;
  std::vector<int> labels_;

  void fit_impl(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t seed, FitReport& report) override;
  Prediction predict_impl(const SparseMatrix& x) const override;
  void save_tensors(std::vector<StoredTensor>& out) const override;
  void load_tensors(const ModelContainer& c) override;
  void describe(FitReport& report) const override;
};

/// Random forest of Gini CART trees on bootstrap samples; hard majority vote.
class RandomForest final : public Classifier {
 public:
  RandomForest(FeatureKind features, ClassicHyperparameters hp = {}) : Classifier(features, hp) {}
  ModelKind kind() const override { return ModelKind::random_forest; }

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  /// RNG seed of tree `t` for a forest fitted with `seed`.
  static std::uint64_t tree_seed(std::uint64_t seed, std::size_t t) { return derive_seed(seed, t); }
  /// Mean decrease in Gini impurity, normalized to sum to 1 per tree, averaged.
  std::optional<std::vector<double>> feature_importances() const override;

 private:
  std::vector<DecisionTree> trees_;

  void fit_impl(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t seed, FitReport& report) override;
  Prediction predict_impl(const SparseMatrix& x) const override;
  void save_tensors(std::vector<StoredTensor>& out) const override;
  void load_tensors(const ModelContainer& c) override;
  void describe(FitReport& report) const override;
};

/// Gradient boosting with logistic loss: regression trees fit to the residuals
/// y - p, Newton leaf values, additive log-odds score.
class GradientBoosting final : public Classifier {
 public:
  GradientBoosting(FeatureKind features, ClassicHyperparameters hp = {}) : Classifier(features, hp) {}
  ModelKind kind() const override { return ModelKind::gradient_boost; }

  double prior_log_odds() const noexcept { return prior_; }
  const std::vector<DecisionTree>& stages() const noexcept { return stages_; }
  /// Training logistic loss after the prior and after each stage.
  const std::vector<double>& training_loss() const noexcept { return train_loss_; }
  /// Raw additive score (log-odds of the real class) per row.
  std::vector<double> decision_function(const SparseMatrix& x) const;
  std::optional<std::vector<double>> feature_importances() const override;

 private:
  double prior_ = 0.0;
  std::vector<DecisionTree> stages_;
  std::vector<double> train_loss_;

  void fit_impl(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t seed, FitReport& report) override;
  Prediction predict_impl(const SparseMatrix& x) const override;
  void save_tensors(std::vector<StoredTensor>& out) const override;
  void load_tensors(const ModelContainer& c) override;
  void describe(FitReport& report) const override;
};

}  // namespace infodemic
