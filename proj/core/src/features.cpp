#include "infodemic/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "infodemic/common.hpp"

namespace infodemic {

Vocabulary Vocabulary::build(std::span<const TokenSequence> train_docs, std::size_t min_df) {
  if (train_docs.empty()) throw Error("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t, std::less<>> df;
  for (const auto& doc : train_docs) {
    std::set<std::string_view> distinct(doc.begin(), doc.end());
    for (auto term : distinct) {
      auto it = df.find(term);
      if (it == df.end()) {
        df.emplace(std::string(term), 1);
      } else {
        ++it->second;
      }
    }
  }
  Vocabulary v;
  v.n_docs_ = train_docs.size();
  for (auto& [term, count] : df) {
    if (count >= std::max<std::size_t>(min_df, 1)) {
      v.terms_.push_back(term);
      v.doc_freq_.push_back(count);
    }
  }
  v.reindex();
  return v;
}

void Vocabulary::reindex() {
  index_.clear();
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], i);
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::doc_freq(std::string_view term) const {
  auto idx = index_of(term);
  if (!idx) throw Error("term '" + std::string(term) + "' is not in the vocabulary");
  return doc_freq_[*idx];
}

std::uint64_t Vocabulary::hash() const { return fnv1a64(to_text()); }

std::string Vocabulary::to_text() const {
  std::string out = "n_docs\t" + std::to_string(n_docs_) + "\n";
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    out += terms_[i];
    out += '\t';
    out += std::to_string(doc_freq_[i]);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  Vocabulary v;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string_view::npos) throw ParseError(line_no, "expected 'term<TAB>count'");
    std::size_t count = 0;
    auto value = line.substr(tab + 1);
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), count);
    if (ec != std::errc{} || ptr != value.data() + value.size()) throw ParseError(line_no, "bad count");
    if (header) {
      if (line.substr(0, tab) != "n_docs") throw ParseError(line_no, "missing n_docs header");
      v.n_docs_ = count;
      header = false;
      continue;
    }
    if (count < 1 || count > v.n_docs_) throw ParseError(line_no, "document frequency out of range");
    v.terms_.emplace_back(line.substr(0, tab));
    v.doc_freq_.push_back(count);
  }
  if (header) throw Error("vocabulary text has no header");
  v.reindex();
  if (v.index_.size() != v.terms_.size()) throw Error("vocabulary text repeats a term");
  return v;
}

double term_frequency(const TokenSequence& doc, std::string_view term) {
  if (doc.empty()) throw Error("term frequency of an empty document is undefined");
  auto count = std::count(doc.begin(), doc.end(), term);
  return static_cast<double>(count) / static_cast<double>(doc.size());
}

double inverse_doc_frequency(const Vocabulary& vocab, std::string_view term) {
  return std::log(static_cast<double>(vocab.n_docs()) / static_cast<double>(vocab.doc_freq(term)));
}

double SparseVector::at(std::size_t index) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), index,
                             [](const SparseEntry& e, std::size_t i) { return e.index < i; });
  return it != entries.end() && it->index == index ? it->weight : 0.0;
}

double SparseVector::norm() const {
  double s = 0;
  for (const auto& e : entries) s += e.weight * e.weight;
  return std::sqrt(s);
}

SparseVector tfidf_vector(const TokenSequence& doc, const Vocabulary& vocab, bool l2_normalize) {
  SparseVector v;
  v.dimension = vocab.size();
  if (doc.empty()) return v;
  std::map<std::size_t, std::size_t> counts;
  for (const auto& t : doc) {
    if (auto idx = vocab.index_of(t)) ++counts[*idx];
  }
  const double len = static_cast<double>(doc.size());
  const double n_docs = static_cast<double>(vocab.n_docs());
  for (auto [idx, count] : counts) {
    const double idf = std::log(n_docs / static_cast<double>(vocab.doc_freq(idx)));
    const double w = (static_cast<double>(count) / len) * idf;
    if (w != 0.0) v.entries.push_back({static_cast<std::uint32_t>(idx), w});
  }
  if (l2_normalize) {
    const double n = v.norm();
    if (n > 0) {
      for (auto& e : v.entries) e.weight /= n;
    }
  }
  return v;
}

void SparseMatrix::append_row(std::span<const SparseEntry> entries) {
  std::uint32_t prev = 0;
  bool first = true;
  for (const auto& e : entries) {
    if (e.index >= cols_) throw ShapeError("sparse column index out of range");
    if (!first && e.index <= prev) throw ShapeError("sparse indices must be strictly increasing");
    if (!std::isfinite(e.weight)) throw NonFiniteError("non-finite feature value");
    prev = e.index;
    first = false;
    if (e.weight != 0.0) entries_.push_back(e);
  }
  row_ptr_.push_back(entries_.size());
}

void SparseMatrix::append_dense_row(std::span<const double> values) {
  if (values.size() != cols_) throw ShapeError("dense row has the wrong dimension");
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (!std::isfinite(values[c])) throw NonFiniteError("non-finite feature value");
    if (values[c] != 0.0) entries_.push_back({static_cast<std::uint32_t>(c), values[c]});
  }
  row_ptr_.push_back(entries_.size());
}

SparseMatrix SparseMatrix::from_dense(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  SparseMatrix m(cols);
  for (const auto& r : rows) m.append_dense_row(r);
  return m;
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  auto entries = row(r);
  auto it = std::lower_bound(entries.begin(), entries.end(), c,
                             [](const SparseEntry& e, std::size_t i) { return e.index < i; });
  return it != entries.end() && it->index == c ? it->weight : 0.0;
}

std::vector<double> SparseMatrix::dense_row(std::size_t r) const {
  std::vector<double> out(cols_, 0.0);
  for (const auto& e : row(r)) out[e.index] = e.weight;
  return out;
}

double SparseMatrix::min_value() const {
  double m = entries_.size() < rows() * cols_ ? 0.0 : std::numeric_limits<double>::infinity();
  for (const auto& e : entries_) m = std::min(m, e.weight);
  return std::isinf(m) ? 0.0 : m;
}

SparseMatrix SparseMatrix::select_rows(std::span<const std::size_t> rows) const {
  SparseMatrix out(cols_);
  for (auto r : rows) out.append_row(row(r));
  return out;
}

bool EmbeddingTable::add(std::string word, std::span<const double> vector) {
  if (vector.size() != dim_) throw ShapeError("embedding vector has the wrong dimension");
  if (index_.count(word)) return false;
  index_.emplace(word, words_.size());
  words_.push_back(std::move(word));
  data_.insert(data_.end(), vector.begin(), vector.end());
  return true;
}

std::optional<std::size_t> EmbeddingTable::row_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::span<const double>> EmbeddingTable::find(std::string_view word) const {
  auto r = row_of(word);
  if (!r) return std::nullopt;
  return row(*r);
}

EmbeddingTable EmbeddingTable::subset(const std::vector<std::string>& keep) const {
  std::vector<std::size_t> rows;
  for (const auto& w : keep) {
    if (auto r = row_of(w)) rows.push_back(*r);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  EmbeddingTable out(dim_);
  for (auto r : rows) out.add(words_[r], row(r));
  return out;
}

std::string EmbeddingTable::to_text() const {
  std::string out;
  char buf[40];
  for (std::size_t r = 0; r < words_.size(); ++r) {
    out += words_[r];
    for (double v : row(r)) {
      std::snprintf(buf, sizeof buf, " %.9g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::uint64_t EmbeddingTable::hash() const {
  std::uint64_t h = fnv1a64("embeddings/" + std::to_string(dim_));
  for (const auto& w : words_) h = fnv1a64(w + '\n', h);
  h = fnv1a64(std::string_view(reinterpret_cast<const char*>(data_.data()), data_.size() * sizeof(double)), h);
  return h;
}

EmbeddingLoadResult parse_embeddings(std::string_view text, std::size_t expected_dim) {
  EmbeddingLoadResult result{EmbeddingTable(expected_dim), {}, {}};
  std::vector<double> values;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::size_t sp = line.find(' ');
    std::string word(line.substr(0, sp));
    values.clear();
    bool bad_number = false;
    std::size_t field_count = 0;
    if (sp != std::string_view::npos) {
      std::string_view rest = line.substr(sp + 1);
      std::size_t i = 0;
      while (i < rest.size()) {
        while (i < rest.size() && rest[i] == ' ') ++i;
        if (i >= rest.size()) break;
        std::size_t j = rest.find(' ', i);
        if (j == std::string_view::npos) j = rest.size();
        ++field_count;
        std::string tok(rest.substr(i, j - i));
        char* end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size()) bad_number = true;
        values.push_back(v);
        i = j;
      }
    }
    if (field_count != expected_dim) {
      result.issues.push_back({line_no, "expected " + std::to_string(expected_dim) + " components, found " +
                                            std::to_string(field_count)});
      continue;
    }
    if (bad_number) {
      result.issues.push_back({line_no, "unparseable component"});
      continue;
    }
    if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
      result.issues.push_back({line_no, "non-finite component"});
      continue;
    }
    result.table.add(std::move(word), values);
  }
  if (result.table.empty()) result.warnings.push_back("embedding file contains no usable vectors");
  return result;
}

EmbeddingLoadResult load_embeddings(const std::string& path, std::size_t expected_dim) {
  return parse_embeddings(read_file(path), expected_dim);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine of vectors with different dimensions");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::optional<std::string> nearest_neighbor(const EmbeddingTable& table, std::string_view word,
                                            const std::vector<std::string>& candidates) {
  auto query = table.find(word);
  if (!query) return std::nullopt;
  std::optional<std::string> best;
  double best_sim = -2.0;
  for (const auto& c : candidates) {
    auto v = table.find(c);
    if (!v) continue;
    double sim = cosine_similarity(*query, *v);
    if (sim > best_sim) {
      best_sim = sim;
      best = c;
    }
  }
  return best;
}

std::vector<double> embed_mean(const TokenSequence& doc, const EmbeddingTable& table) {
  std::vector<double> mean(table.dim(), 0.0);
  std::size_t n = 0;
  for (const auto& t : doc) {
    if (auto v = table.find(t)) {
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += (*v)[k];
      ++n;
    }
  }
  if (n > 0) {
    for (auto& m : mean) m /= static_cast<double>(n);
  }
  return mean;
}

IndexSequence encode_sequence(const TokenSequence& doc, const EmbeddingTable& table, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  IndexSequence seq;
  seq.indices.assign(max_len, kPaddingIndex);
  for (const auto& t : doc) {
    if (seq.true_length == max_len) break;
    if (auto r = table.row_of(t)) seq.indices[seq.true_length++] = static_cast<std::uint32_t>(*r + 1);
  }
  return seq;
}

}  // namespace infodemic
