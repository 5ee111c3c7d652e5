#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "infodemic/features.hpp"
#include "infodemic/model_kind.hpp"
#include "infodemic/models_classic.hpp"

namespace infodemic {

/// Counts with "real" (label 1) as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws ShapeError on a length mismatch, Error on labels outside {0,1}.
ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred);

/// Fractions in [0,1]. A metric with a zero denominator is 0 and flagged.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
};

/// Throws Error on an empty matrix.
Metrics metrics(const ConfusionMatrix& cm);

/// One (model, featurizer) cell. Metric fields are percentages.
struct EvalReport {
  ModelKind model = ModelKind::multinomial_nb;
  /// Unset for the ensemble, which reads both feature kinds.
  std::optional<FeatureKind> features;
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  /// Set when the cell could not be produced.
  std::optional<std::string> failure;
};

EvalReport make_report(ModelKind model, std::optional<FeatureKind> features, std::span<const int> y_true,
                       std::span<const int> y_pred, double seconds, std::uint64_t seed);
EvalReport failed_report(ModelKind model, std::optional<FeatureKind> features, std::string reason, std::uint64_t seed);

/// The one-line statement every report carries about the positive class.
std::string positive_class_note();

enum class TableStyle { markdown, plain };

/// Rows are the model kinds present, in the fixed order RF, NB, GB, KNN, DNN,
/// CNN, GRU, LSTM, RMDL; columns TF-IDF and Word Embedding; cells are accuracy
/// %. NB x embedding is "-", the ensemble spans both columns, and the largest
/// accuracy is flagged. Later reports for the same cell replace earlier ones.
std::string comparison_table(std::span<const EvalReport> reports, TableStyle style = TableStyle::markdown);

/// Metrics and confusion counts, one row per report; runtime is left out so the
/// file is reproducible.
std::string metrics_csv(std::span<const EvalReport> reports);
/// model,features,seconds rows.
std::string timings_csv(std::span<const EvalReport> reports);
/// Parses metrics_csv output.
std::vector<EvalReport> parse_metrics_csv(std::string_view text);

/// Top-k vocabulary terms by the model's importances, descending (ties by
/// term order). Throws ConfigError for models without importances or fitted
/// on embeddings, ShapeError when the vocabulary does not match.
std::vector<std::pair<std::string, double>> top_features(const Classifier& model, const Vocabulary& vocab,
                                                         std::size_t k);

}  // namespace infodemic
