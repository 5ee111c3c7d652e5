#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "infodemic/models_neural.hpp"

namespace infodemic::rmdl {

/// Inclusive integer ranges sampled per member.
struct FamilyRange {
  std::size_t min_layers = 1;
  std::size_t max_layers = 1;
  std::size_t min_nodes = 32;
  std::size_t max_nodes = 256;

  bool operator==(const FamilyRange&) const = default;
};

struct EnsembleConfig {
  std::size_t dnn_models = 3;
  std::size_t cnn_models = 3;
  std::size_t rnn_models = 3;
  std::size_t epochs = 8;
  FamilyRange dnn{2, 5, 32, 256};
  /// CNN "layers" are parallel convolution branches.
  FamilyRange cnn{2, 4, 32, 256};
  FamilyRange rnn{1, 3, 32, 256};
  /// Recurrent members draw their cell uniformly from this list.
  std::vector<ModelKind> rnn_cells{ModelKind::rnn_gru, ModelKind::rnn_lstm};
  std::size_t min_kernel = 2;
  std::size_t max_kernel = 8;
  double dropout = 0.25;
  std::uint64_t seed = 0;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  double abort_loss = 1e4;
  /// Sequence lengths of the CNN and RNN members.
  std::size_t max_len = 128;
  std::size_t rnn_max_len = 64;
  /// Members trained at the same time.
  std::size_t workers = 1;
  /// Attempts at drawing a buildable architecture per member.
  std::size_t max_retries = 32;

  std::size_t total() const noexcept { return dnn_models + cnn_models + rnn_models; }
  /// Throws ConfigError on empty/inverted ranges or an even member count.
  void validate() const;
};

struct MemberSpec {
  ModelKind family = ModelKind::dnn;  // dnn, cnn, rnn_gru or rnn_lstm
  std::size_t ordinal = 0;            // index within its family
  std::uint64_t seed = 0;
  neural::ArchitectureSpec architecture;
  /// Sampled layer count, per-layer widths and kernel widths.
  std::size_t layers = 0;
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> kernels;
  std::size_t draws = 1;

  /// "DNN-0", "CNN-2", "RNN-1".
  std::string name() const;
};

/// Input dimensions the sampled architectures are built for.
struct InputShape {
  std::size_t tfidf_dim = 0;
  std::size_t embed_rows = 0;
  std::size_t embed_dim = 0;
};

/// DNN members first, then CNN, then RNN. Member i draws from
/// derive_seed(master seed, i). DNNs read TF-IDF, CNNs and RNNs read embeddings.
std::vector<MemberSpec> sample_architectures(const EnsembleConfig& config, const InputShape& shape);

enum class Split { train = 0, validation = 1, test = 2 };

/// Prepared member inputs per split.
struct EnsembleData {
  std::array<neural::NeuralDataset, 3> tfidf;
  /// Sequences padded to config.max_len (CNN) and config.rnn_max_len (RNN).
  std::array<neural::NeuralDataset, 3> sequences;
  std::array<neural::NeuralDataset, 3> rnn_sequences;
  const EmbeddingTable* embeddings = nullptr;

  const neural::NeuralDataset& input(ModelKind family, Split split) const;
  InputShape shape() const;
};

struct EnsembleMember {
  MemberSpec spec;
  /// Seed of the run that produced the kept weights.
  std::uint64_t train_seed = 0;
  std::size_t attempts = 0;
  std::optional<neural::Network> network;
  std::vector<neural::EpochRecord> history;
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<int> test_predictions;
  bool excluded = false;
  std::string note;
};

struct EnsembleModel {
  std::vector<EnsembleMember> members;
  std::vector<int> test_predictions;
  double combined_accuracy = 0.0;
  double seconds = 0.0;
  std::vector<std::string> warnings;

  std::size_t voting_members() const;
};

/// Trains every sampled member, votes on the test split. A member that
/// diverges gets one retry with a fresh seed before it is dropped; if that
/// leaves an even count, the weakest remaining member (by validation accuracy)
/// of the same family is dropped too.
EnsembleModel train_ensemble(const EnsembleConfig& config, const EnsembleData& data);

/// Restores an odd voting count after exclusions by also dropping the weakest
/// remaining member (validation accuracy) of the family that lost one.
void enforce_odd_vote(EnsembleModel& model);

/// Unweighted majority per row. Throws ConfigError on zero or an even number
/// of members, ShapeError on unequal lengths, Error on labels outside {0,1}.
std::vector<int> vote(std::span<const std::vector<int>> member_predictions);

/// Labels from the voting members on `split` of `data`.
std::vector<int> predict(const EnsembleModel& model, const EnsembleData& data, Split split);

/// Member accuracy table (name, layers, nodes, accuracy %) plus the combined row.
std::string member_table(const EnsembleModel& model);

/// Writes one container per member and manifest.json into `dir`.
void save_ensemble(const EnsembleModel& model, const std::string& dir, std::uint64_t vocabulary_hash,
                   std::uint64_t pipeline_hash);
EnsembleModel load_ensemble(const std::string& dir, std::uint64_t vocabulary_hash, std::uint64_t pipeline_hash);

}  // namespace infodemic::rmdl
