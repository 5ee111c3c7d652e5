#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace infodemic {

inline constexpr int kFake = 0;
inline constexpr int kReal = 1;

struct LabeledDocument {
  std::string id;
  std::string text;
  int label = kFake;

  bool operator==(const LabeledDocument&) const = default;
};

/// One of train / validation / test, in exact file order.
struct DatasetSplit {
  std::string name;
  std::vector<LabeledDocument> documents;

  bool operator==(const DatasetSplit&) const = default;
};

enum class TableFormat { csv, tsv };

struct ColumnNames {
  std::string id = "id";
  std::string text = "tweet";
  std::string label = "label";
  /// When false a file without the label column loads with every label kFake.
  bool label_required = true;
};

/// A row that was dropped during ingestion, with the line it started on.
struct RowIssue {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  DatasetSplit split;
  std::vector<RowIssue> skipped;
};

/// "fake" -> 0, "real" -> 1, case-insensitive, surrounding whitespace ignored.
std::optional<int> parse_label(std::string_view raw);
std::string_view label_name(int label);

/// Parses CSV (RFC 4180 quoting) or TSV (no quoting) text with a header row.
/// Rows with unknown labels, empty text or duplicate ids are skipped and
/// reported; a header without the configured columns throws ConfigError.
LoadResult parse_split(std::string_view content, std::string name, TableFormat format,
                       const ColumnNames& columns = {});

LoadResult load_split(const std::string& path, TableFormat format,
                      const ColumnNames& columns = {});

/// Guesses the format from the extension (.tsv -> tsv, otherwise csv).
TableFormat format_for_path(std::string_view path);

struct ClassCounts {
  std::size_t real = 0;
  std::size_t fake = 0;

  bool operator==(const ClassCounts&) const = default;
};

ClassCounts class_distribution(const DatasetSplit& split);

/// Serializes a split with the given column names; reloading yields the same split.
std::string write_split(const DatasetSplit& split, TableFormat format,
                        const ColumnNames& columns = {});

struct Corpus {
  DatasetSplit train;
  DatasetSplit validation;
  DatasetSplit test;
};

struct SyntheticCorpusConfig {
  std::uint64_t seed = 1;
  std::size_t n_train = 6420;
  std::size_t n_validation = 2140;
  std::size_t n_test = 2140;
  double real_fraction = 3360.0 / 6420.0;
  std::size_t shared_words = 2000;
  std::size_t class_words = 300;
  std::size_t min_tokens = 8;
  std::size_t max_tokens = 30;
  double own_keyword_rate = 0.12;
  double other_keyword_rate = 0.03;
};

/// Sizes the splits 3:1:1 the way the public dataset is split.
SyntheticCorpusConfig synthetic_config_for(std::size_t n_train, std::uint64_t seed);

/// Word lists the generator draws from; words are lowercase ASCII letters.
struct SyntheticLexicon {
  std::vector<std::string> shared;
  std::vector<std::string> real_keywords;
  std::vector<std::string> fake_keywords;
};

SyntheticLexicon synthetic_lexicon(const SyntheticCorpusConfig& config);

/// Two keyword-biased unigram distributions over a shared background
/// vocabulary. Texts include stopwords, numbers, URLs and punctuation so the
/// preprocessing stages all have work to do.
Corpus generate_synthetic_corpus(const SyntheticCorpusConfig& config);

/// GloVe-format text (word then `dim` floats) for every lexicon word.
/// Keyword vectors are shifted along a per-class direction.
std::string synthetic_embeddings_text(const SyntheticCorpusConfig& config, std::size_t dim);

}  // namespace infodemic
