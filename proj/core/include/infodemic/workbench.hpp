#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "infodemic/corpus.hpp"
#include "infodemic/evaluation.hpp"
#include "infodemic/features.hpp"
#include "infodemic/models_classic.hpp"
#include "infodemic/models_neural.hpp"
#include "infodemic/preprocess.hpp"
#include "infodemic/rmdl.hpp"

namespace infodemic::workbench {

/// Every experiment setting. Text form is flat `key = value` lines; see
/// config_keys() for names, defaults and meanings.
struct RunConfig {
  std::string train_path;
  std::string validation_path;
  std::string test_path;
  ColumnNames columns;
  /// > 0 replaces the dataset with a generated corpus of this many training documents.
  std::size_t synthetic = 0;

  std::string embeddings_path;
  std::size_t embedding_dim = 50;
  std::string embeddings_url;
  std::string embeddings_sha256;

  bool stem = true;
  bool drop_numeric = true;
  std::string stoplist_path;

  std::size_t min_df = 1;
  bool l2_normalize = false;

  ClassicHyperparameters classic;

  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double clip_norm = 0.0;
  neural::Precision precision = neural::Precision::f64;
  neural::NeuralDefaults neural = neural::NeuralDefaults::reduced();
  bool paper_scale = false;

  rmdl::EnsembleConfig ensemble;
  /// Members per family; overrides the three ensemble counts.
  std::size_t ensemble_models = 3;

  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  std::string cache_dir = "cache";
  std::size_t workers = 1;
  /// Restricts the grid to these model kinds; empty means all.
  std::vector<ModelKind> only;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// All accepted keys in echo order.
const std::vector<ConfigKey>& config_keys();

/// Throws ConfigError on an unknown key or a value of the wrong type.
void set_option(RunConfig& config, std::string_view key, std::string_view value);
std::string get_option(const RunConfig& config, std::string_view key);
/// Applies `key = value` lines ('#' starts a comment). Throws ParseError.
void apply_config_text(RunConfig& config, std::string_view text);
/// Every key with its resolved value; feeding it back reproduces `config`.
std::string config_text(const RunConfig& config);

/// Effective neural defaults after the paper-scale switch.
neural::NeuralDefaults neural_defaults(const RunConfig& config);
/// Ensemble settings with the run's seed, workers and sequence lengths filled in.
rmdl::EnsembleConfig ensemble_config(const RunConfig& config);

using Log = std::function<void(const std::string&)>;

/// Preprocessed splits, vocabulary and embedding subset for one configuration.
struct PreparedData {
  std::array<std::string, 3> split_names{"train", "validation", "test"};
  std::array<std::vector<std::string>, 3> ids;
  std::array<std::vector<int>, 3> labels;
  /// Stemmed tokens for TF-IDF; unstemmed tokens for embedding lookup.
  std::array<std::vector<TokenSequence>, 3> tfidf_tokens;
  std::array<std::vector<TokenSequence>, 3> embedding_tokens;
  Vocabulary vocabulary;
  std::optional<EmbeddingTable> embeddings;
  bool l2_normalize = false;
  std::uint64_t tfidf_pipeline_hash = 0;
  std::uint64_t embedding_pipeline_hash = 0;
  std::string cache_key;
  std::string cache_path;
  bool cache_hit = false;
  std::vector<RowIssue> skipped;
  std::vector<std::string> notes;

  /// Hashes a container must carry to be used with this data.
  std::uint64_t vocabulary_hash(FeatureKind kind) const;
  std::uint64_t pipeline_hash(FeatureKind kind) const;
  std::size_t size(std::size_t split) const { return ids[split].size(); }
};

/// Loads or generates the corpus, preprocesses it and builds the vocabulary and
/// embedding subset. Results are cached under cache_dir keyed by a hash of the
/// inputs and settings; an unchanged rerun reads the cache.
PreparedData prepare(const RunConfig& config, const Log& log = {});

/// Model inputs for one featurizer.
SparseMatrix tfidf_matrix(const PreparedData& data, std::size_t split);
SparseMatrix pooled_matrix(const PreparedData& data, std::size_t split);
neural::NeuralDataset neural_dataset(const PreparedData& data, std::size_t split, FeatureKind kind,
                                     std::size_t max_len);
rmdl::EnsembleData ensemble_data(const PreparedData& data, const rmdl::EnsembleConfig& config);

/// Tokens of unseen documents, preprocessed as prepare() does.
struct Featurized {
  std::vector<TokenSequence> tfidf_tokens;
  std::vector<TokenSequence> embedding_tokens;
};
Featurized preprocess_documents(const RunConfig& config, const std::vector<LabeledDocument>& docs);
SparseMatrix tfidf_rows(const PreparedData& data, const std::vector<TokenSequence>& tokens);
SparseMatrix pooled_rows(const PreparedData& data, const std::vector<TokenSequence>& tokens);
neural::NeuralDataset sequence_rows(const PreparedData& data, const std::vector<TokenSequence>& tokens, std::size_t max_len);

/// Throws ConfigError for combinations that cannot be trained.
void check_cell(ModelKind model, FeatureKind features, const PreparedData& data);

/// Seed of a grid cell, independent of which other cells run.
std::uint64_t cell_seed(std::uint64_t master, ModelKind model, std::optional<FeatureKind> features);

struct CellOutcome {
  EvalReport report;
  /// Serialized model container (empty for the ensemble, which is saved as a directory).
  std::string container;
  std::optional<FitReport> fit;
  std::vector<neural::EpochRecord> history;
  std::optional<rmdl::EnsembleModel> ensemble;
  std::vector<std::string> warnings;
};

/// Trains one (model, featurizer) cell and evaluates it on the test split.
/// The ensemble ignores `features`.
CellOutcome run_cell(const PreparedData& data, const RunConfig& config, ModelKind model,
                     std::optional<FeatureKind> features);

/// Writes a cell's container, history, fit report and metrics into `dir`.
void write_cell(const CellOutcome& cell, const PreparedData& data, const std::string& dir);

struct GridCell {
  ModelKind model;
  std::optional<FeatureKind> features;
};

/// All valid cells in table order, restricted to config.only.
std::vector<GridCell> grid_cells(const RunConfig& config);

struct GridResult {
  std::vector<EvalReport> reports;
  std::string member_table;
  std::vector<std::string> warnings;
};

/// Runs every grid cell (up to config.workers at once), writing each cell into
/// `run_dir`/cells/<model>-<features>. A failing cell is recorded and the grid
/// continues.
GridResult run_grid(const PreparedData& data, const RunConfig& config, const std::string& run_dir, const Log& log = {});

/// TF-IDF should beat embeddings for RF, KNN and GB; one message per violation.
std::vector<std::string> directional_warnings(const std::vector<EvalReport>& reports);

/// A trained model of any kind restored from a cell directory, a container
/// file or an ensemble directory.
struct LoadedModel {
  ModelKind kind = ModelKind::multinomial_nb;
  std::optional<FeatureKind> features;
  std::unique_ptr<Classifier> classic;
  std::optional<neural::Network> network;
  std::optional<rmdl::EnsembleModel> ensemble;
};

/// Ensemble containers carry both pipelines' hashes folded together.
std::pair<std::uint64_t, std::uint64_t> ensemble_hashes(const PreparedData& data);

/// Refuses containers whose vocabulary or preprocessing hash differs from `data`.
LoadedModel load_model(const std::string& path, const PreparedData& data);

/// Labels and per-class scores (ensemble: vote fractions).
Prediction predict_documents(LoadedModel& model, const PreparedData& data, const Featurized& docs);

/// runs/<UTC timestamp>-<seed>
std::string make_run_dir(const RunConfig& config);

}  // namespace infodemic::workbench
