#include "infodemic/model_kind.hpp"

#include <array>
#include <utility>

#include "infodemic/common.hpp"

namespace infodemic {
namespace {

struct KindName {
  ModelKind kind;
  const char* key;
  const char* display;
};

constexpr std::array<KindName, 9> kKinds = {{
    {ModelKind::random_forest, "rf", "Random Forest"},
    {ModelKind::multinomial_nb, "nb", "Multinomial Naive Bayes"},
    {ModelKind::gradient_boost, "gb", "Gradient Boost"},
    {ModelKind::knn, "knn", "KNN"},
    {ModelKind::dnn, "dnn", "DNN"},
    {ModelKind::cnn, "cnn", "CNN"},
    {ModelKind::rnn_gru, "gru", "RNN (GRU)"},
    {ModelKind::rnn_lstm, "lstm", "RNN (LSTM)"},
    {ModelKind::rmdl, "rmdl", "RMDL"},
}};

const KindName& entry(ModelKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k;
  throw Error("unknown model kind");
}

}  // namespace

std::string to_string(ModelKind kind) { return entry(kind).key; }
std::string display_name(ModelKind kind) { return entry(kind).display; }

std::string to_string(FeatureKind kind) { return kind == FeatureKind::tfidf ? "tfidf" : "embedding"; }
std::string display_name(FeatureKind kind) { return kind == FeatureKind::tfidf ? "TF-IDF" : "Word Embedding"; }

ModelKind parse_model_kind(std::string_view name) {
  for (const auto& k : kKinds)
    if (name == k.key) return k.kind;
  throw ConfigError("unknown model '" + std::string(name) + "' (expected rf, nb, gb, knn, dnn, cnn, gru, lstm or rmdl)");
}

FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "tfidf") return FeatureKind::tfidf;
  if (name == "embedding") return FeatureKind::embedding;
  throw ConfigError("unknown featurizer '" + std::string(name) + "' (expected tfidf or embedding)");
}

}  // namespace infodemic
