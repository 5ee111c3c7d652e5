#pragma once

#include <string>
#include <string_view>

namespace infodemic {

enum class ModelKind { multinomial_nb, knn, random_forest, gradient_boost, dnn, cnn, rnn_gru, rnn_lstm, rmdl };
enum class FeatureKind { tfidf, embedding };

/// "nb", "knn", "rf", "gb", "dnn", "cnn", "gru", "lstm", "rmdl".
std::string to_string(ModelKind kind);
/// "tfidf" or "embedding".
std::string to_string(FeatureKind kind);
/// Display names used in tables, e.g. "Random Forest".
std::string display_name(ModelKind kind);
std::string display_name(FeatureKind kind);
/// Accepts the names produced by to_string(). Throws ConfigError otherwise.
ModelKind parse_model_kind(std::string_view name);
FeatureKind parse_feature_kind(std::string_view name);

inline bool is_classic(ModelKind kind) {
  return kind == ModelKind::multinomial_nb || kind == ModelKind::knn || kind == ModelKind::random_forest ||
         kind == ModelKind::gradient_boost;
}

}  // namespace infodemic
