#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "infodemic/corpus.hpp"
#include "infodemic/preprocess.hpp"

namespace infodemic {

/// Train-split term index with document frequencies. Indices follow
/// lexicographic term order.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Throws Error on an empty corpus.
  static Vocabulary build(std::span<const TokenSequence> train_docs, std::size_t min_df = 1);

  std::optional<std::size_t> index_of(std::string_view term) const;
  bool contains(std::string_view term) const { return index_of(term).has_value(); }
  std::size_t size() const noexcept { return terms_.size(); }
  std::size_t n_docs() const noexcept { return n_docs_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  std::size_t doc_freq(std::size_t index) const { return doc_freq_.at(index); }
  /// Throws Error for terms outside the vocabulary.
  std::size_t doc_freq(std::string_view term) const;

  std::uint64_t hash() const;
  /// "n_docs\t<N>" header then one "term\tdf" line per term.
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);

  bool operator==(const Vocabulary& other) const {
    return n_docs_ == other.n_docs_ && terms_ == other.terms_ && doc_freq_ == other.doc_freq_;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::size_t> doc_freq_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t n_docs_ = 0;

  void reindex();
};

/// count(term) / |doc|. Throws Error on an empty document.
double term_frequency(const TokenSequence& doc, std::string_view term);

/// ln(n_docs / doc_freq(term)). Throws Error for unknown terms.
double inverse_doc_frequency(const Vocabulary& vocab, std::string_view term);

struct SparseEntry {
  std::uint32_t index = 0;
  double weight = 0.0;

  bool operator==(const SparseEntry&) const = default;
};

/// Strictly increasing indices, no explicit zeros.
struct SparseVector {
  std::size_t dimension = 0;
  std::vector<SparseEntry> entries;

  double at(std::size_t index) const;
  double norm() const;
};

/// TF(d,t) * ln(N/f(t)) for every in-vocabulary term; terms with zero weight
/// are omitted. Unknown terms are ignored.
SparseVector tfidf_vector(const TokenSequence& doc, const Vocabulary& vocab, bool l2_normalize = false);

/// Row-major sparse matrix (CSR). Dense features are stored with every
/// non-zero component so all classic models share one input type.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  explicit SparseMatrix(std::size_t cols) : cols_(cols) {}

  void append_row(std::span<const SparseEntry> entries);
  void append_row(const SparseVector& v) { append_row(std::span<const SparseEntry>(v.entries)); }
  void append_dense_row(std::span<const double> values);

  static SparseMatrix from_dense(const std::vector<std::vector<double>>& rows, std::size_t cols);

  std::size_t rows() const noexcept { return row_ptr_.size() - 1; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return entries_.size(); }
  std::span<const SparseEntry> row(std::size_t r) const {
    return {entries_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  /// Value at (r, c); binary search within the row.
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> dense_row(std::size_t r) const;
  /// Smallest stored value (0 if any implicit zero exists).
  double min_value() const;

  SparseMatrix select_rows(std::span<const std::size_t> rows) const;

 private:
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<SparseEntry> entries_;
};

/// Word vectors of a fixed dimension. Row i is addressed by sequence index i+1;
/// index 0 is reserved for padding.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  /// Adds a vector; returns false (and keeps the first) for duplicate words.
  bool add(std::string word, std::span<const double> vector);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  std::optional<std::size_t> row_of(std::string_view word) const;
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
  std::optional<std::span<const double>> find(std::string_view word) const;

  /// Only the listed words, in this table's order.
  EmbeddingTable subset(const std::vector<std::string>& keep) const;

  /// GloVe text format, "%.6g" components.
  std::string to_text() const;
  std::uint64_t hash() const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingLoadResult {
  EmbeddingTable table;
  std::vector<RowIssue> issues;
  std::vector<std::string> warnings;
};

/// One entry per line: token then `expected_dim` decimal floats.
EmbeddingLoadResult parse_embeddings(std::string_view text, std::size_t expected_dim);
EmbeddingLoadResult load_embeddings(const std::string& path, std::size_t expected_dim);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Candidate with the highest cosine similarity to `word`; nullopt when the
/// word or every candidate is missing from the table.
std::optional<std::string> nearest_neighbor(const EmbeddingTable& table, std::string_view word,
                                            const std::vector<std::string>& candidates);

/// Mean of in-table token vectors; zero vector when none are in the table.
std::vector<double> embed_mean(const TokenSequence& doc, const EmbeddingTable& table);

struct IndexSequence {
  std::vector<std::uint32_t> indices;
  std::size_t true_length = 0;

  bool operator==(const IndexSequence&) const = default;
};

inline constexpr std::uint32_t kPaddingIndex = 0;

/// First `max_len` in-table tokens as table indices (row + 1), right-padded
/// with kPaddingIndex. Out-of-table tokens are skipped.
IndexSequence encode_sequence(const TokenSequence& doc, const EmbeddingTable& table, std::size_t max_len);

}  // namespace infodemic
