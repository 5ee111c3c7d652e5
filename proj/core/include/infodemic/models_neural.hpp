#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "infodemic/container.hpp"
#include "infodemic/features.hpp"
#include "infodemic/model_kind.hpp"
#include "infodemic/models_classic.hpp"
#include "infodemic/nn/ops.hpp"
#include "infodemic/nn/optim.hpp"

namespace infodemic::neural {

enum class LayerKind { embedding, reshape, flatten, dense, dropout, conv1d, avgpool1d, gru, lstm, concat, softmax };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  /// dense units, conv filters, recurrent hidden size, embedding dimension
  std::size_t units = 0;
  /// conv kernel width, pooling window (0 = global), reshape chunk size
  std::size_t width = 0;
  /// embedding rows including the padding row
  std::size_t rows = 0;
  double rate = 0.0;
  bool relu = false;
  bool return_sequence = false;
  bool trainable = true;
  /// Parallel branch (CNN); -1 for the main chain. A concat layer joins all
  /// open branches in index order; each branch starts from the main chain
  /// output just before its first layer.
  int branch = -1;

  bool operator==(const LayerSpec&) const = default;
};

enum class InputMode { tfidf_vector, embedding_sequence };

std::string to_string(InputMode mode);

struct ArchitectureSpec {
  ModelKind family = ModelKind::dnn;
  InputMode input = InputMode::tfidf_vector;
  /// TF-IDF vocabulary size or sequence max_len.
  std::size_t input_dim = 0;
  /// Ends with dense(2) and a softmax head.
  std::vector<LayerSpec> layers;

  bool operator==(const ArchitectureSpec&) const = default;

  /// Per-example output shape of every layer; throws ShapeError on an
  /// inconsistent chain.
  std::vector<nn::Shape> shapes() const;
  /// As shapes(), also collecting each layer's input shape.
  std::vector<nn::Shape> layer_shapes(std::vector<nn::Shape>* inputs) const;
  std::size_t parameter_count() const;
  std::string to_json() const;
  static ArchitectureSpec from_json(std::string_view text);
};

/// TF-IDF rows become (ceil(dim / chunk) x chunk) pseudo time steps.
inline constexpr std::size_t kTfidfChunk = 100;

/// [flatten, (dense+relu, dropout) x |widths|, dense(2), softmax]. In
/// embedding mode `embedding(rows, dim)` is prepended and flatten turns
/// [max_len, dim] into one vector; on TF-IDF input flatten is a no-op.
ArchitectureSpec build_dnn(InputMode input, std::size_t input_dim, const std::vector<std::size_t>& widths,
                           double dropout, std::size_t embed_rows = 0, std::size_t embed_dim = 0);

/// Input stage (embedding or TF-IDF reshape), then one branch per kernel width
/// [conv1d(width, filters) + global average pool], concat, dropout, dense(2), softmax.
ArchitectureSpec build_cnn(InputMode input, std::size_t input_dim, const std::vector<std::size_t>& kernel_widths,
                           std::size_t filters, double dropout, std::size_t embed_rows = 0, std::size_t embed_dim = 0);

/// Input stage, then (recurrent(hidden) + dropout) x layers; every recurrent
/// layer but the last returns its full sequence. dense(2), softmax.
ArchitectureSpec build_rnn(ModelKind cell, InputMode input, std::size_t input_dim, std::size_t layers,
                           std::size_t hidden, double dropout, std::size_t embed_rows = 0, std::size_t embed_dim = 0);

/// Features for one split in the form a network consumes.
struct NeuralDataset {
  InputMode mode = InputMode::tfidf_vector;
  SparseMatrix tfidf;
  std::vector<IndexSequence> sequences;
  std::vector<int> labels;

  std::size_t size() const noexcept { return mode == InputMode::tfidf_vector ? tfidf.rows() : sequences.size(); }
};

struct Batch {
  InputMode mode = InputMode::tfidf_vector;
  SparseMatrix tfidf;
  std::vector<std::uint32_t> indices;
  std::vector<std::size_t> lengths;
  std::size_t size = 0;
  std::size_t time = 0;
};

Batch make_batch(const NeuralDataset& data, std::span<const std::size_t> rows);

class Network {
 public:
  /// Initializes every layer from `seed` (one derived stream per layer).
  /// `pretrained` fills the embedding table rows 1..n; row 0 stays zero.
  Network(ArchitectureSpec spec, std::uint64_t seed, const EmbeddingTable* pretrained = nullptr);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const ArchitectureSpec& spec() const noexcept { return spec_; }
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  /// Trainable parameters only.
  std::vector<nn::Parameter*> trainable();
  std::size_t parameter_count() const;

  /// Logits [batch, 2].
  nn::Tensor forward(nn::Graph& g, const Batch& batch, nn::Mode mode, Rng& rng);
  /// Eval-mode class probabilities [rows, 2].
  nn::NdArray predict_proba(const NeuralDataset& data, std::size_t batch_size = 256);
  Prediction predict(const NeuralDataset& data, std::size_t batch_size = 256);

  /// Weights are stored as float32.
  ModelContainer to_container(std::uint64_t vocabulary_hash, std::uint64_t pipeline_hash) const;
  static Network from_container(const ModelContainer& container);

 private:
  struct LayerParams {
    std::vector<std::unique_ptr<nn::Parameter>> params;
  };

  ArchitectureSpec spec_;
  std::vector<LayerParams> layers_;
};

/// Restores a network after checking that the container was written for the
/// active vocabulary and preprocessing pipeline.
Network load_network(const ModelContainer& container, std::uint64_t vocabulary_hash, std::uint64_t pipeline_hash);

enum class Precision { f64, f32 };

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  nn::AdamHyperparameters adam;
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  /// Global gradient-norm cap; 0 disables.
  double clip_norm = 0.0;
  /// A mean batch loss above this aborts training as diverged.
  double abort_loss = 1e4;
  /// Restore the weights of the best validation epoch at the end.
  bool keep_best = true;

  /// Throws ConfigError.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  double seconds = 0.0;
};

/// Training stopped on a NaN/Inf or runaway loss.
class DivergenceError : public NonFiniteError {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what)
      : NonFiniteError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                       ": " + what),
        epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_, batch_;
};

struct TrainResult {
  Network network;
  std::vector<EpochRecord> history;
  /// 1-based epoch whose weights were kept.
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

/// Mini-batch Adam on softmax cross-entropy. Throws DivergenceError.
TrainResult train(const ArchitectureSpec& spec, const NeuralDataset& train_data, const NeuralDataset& validation,
                  const TrainConfig& config, const EmbeddingTable* pretrained = nullptr);

/// "epoch,train_loss,train_acc,val_acc" rows.
std::string history_csv(const std::vector<EpochRecord>& history);

/// Architecture defaults. `paper_scale` lifts the reduced recurrent budget.
struct NeuralDefaults {
  std::vector<std::size_t> dnn_widths{512, 256, 128, 64};
  std::vector<std::size_t> cnn_kernel_widths{3, 4, 5, 6, 7, 8};
  std::size_t cnn_filters = 64;
  std::size_t rnn_layers = 4;
  std::size_t rnn_hidden = 64;
  std::size_t max_len = 128;
  std::size_t rnn_max_len = 64;
  double dropout = 0.25;
  double recurrent_clip_norm = 5.0;

  static NeuralDefaults reduced();
  static NeuralDefaults paper_scale();
};

/// The architecture for a (family, featurizer) grid cell.
ArchitectureSpec default_architecture(ModelKind family, FeatureKind features, const NeuralDefaults& defaults,
                                      std::size_t tfidf_dim, std::size_t embed_rows, std::size_t embed_dim);

/// Sequence length the family reads in embedding mode.
std::size_t sequence_length(ModelKind family, const NeuralDefaults& defaults);

}  // namespace infodemic::neural
