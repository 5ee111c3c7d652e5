#include "infodemic/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "infodemic/common.hpp"
#include "infodemic/preprocess.hpp"

namespace infodemic {
namespace {

struct Record {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<Record> parse_csv_records(std::string_view text) {
  std::vector<Record> records;
  Record current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    bool blank = current.fields.size() == 1 && current.fields[0].empty();
    if (!blank) records.push_back(std::move(current));
    current = Record{};
    current.line = line;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started && field.empty()) {
          in_quotes = true;
          field_started = true;
        } else {
          field.push_back(c);  // stray quote inside an unquoted field
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        ++line;
        end_record();
        break;
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw ParseError(current.line, "unterminated quoted field");
  if (!field.empty() || !current.fields.empty()) end_record();
  return records;
}

std::vector<Record> parse_tsv_records(std::string_view text) {
  std::vector<Record> records;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view row = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line;
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    if (row.empty()) continue;
    Record r;
    r.line = line;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = row.find('\t', start);
      r.fields.emplace_back(row.substr(start, tab == std::string_view::npos ? row.size() - start : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == name) return i;
  }
  throw ConfigError("missing column '" + name + "' in header");
}

bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

void append_csv_field(std::string& out, std::string_view s) {
  if (!needs_quotes(s)) {
    out.append(s);
    return;
  }
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

}  // namespace

std::optional<int> parse_label(std::string_view raw) {
  std::string s(trim(raw));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "fake") return kFake;
  if (s == "real") return kReal;
  return std::nullopt;
}

std::string_view label_name(int label) { return label == kReal ? "real" : "fake"; }

LoadResult parse_split(std::string_view content, std::string name, TableFormat format,
                       const ColumnNames& columns) {
  if (content.size() >= 3 && content.substr(0, 3) == "\xEF\xBB\xBF") content.remove_prefix(3);
  std::vector<Record> records =
      format == TableFormat::csv ? parse_csv_records(content) : parse_tsv_records(content);
  LoadResult result;
  result.split.name = std::move(name);
  if (records.empty()) throw ConfigError("missing header row");

  const auto& header = records.front().fields;
  const std::size_t id_col = column_index(header, columns.id);
  const std::size_t text_col = column_index(header, columns.text);
  const bool has_label = columns.label_required ||
                         std::any_of(header.begin(), header.end(), [&](const std::string& h) { return trim(h) == columns.label; });
  const std::size_t label_col = has_label ? column_index(header, columns.label) : 0;
  const std::size_t needed = std::max({id_col, text_col, label_col}) + 1;

  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    if (rec.fields.size() < needed) {
      result.skipped.push_back({rec.line, "expected at least " + std::to_string(needed) +
                                              " fields, found " + std::to_string(rec.fields.size())});
      continue;
    }
    auto label = has_label ? parse_label(rec.fields[label_col]) : std::optional<int>(kFake);
    if (!label) {
      result.skipped.push_back({rec.line, "unknown label '" + rec.fields[label_col] + "'"});
      continue;
    }
    if (trim(rec.fields[text_col]).empty()) {
      result.skipped.push_back({rec.line, "empty text"});
      continue;
    }
    if (!seen.insert(rec.fields[id_col]).second) {
      result.skipped.push_back({rec.line, "duplicate id '" + rec.fields[id_col] + "'"});
      continue;
    }
    result.split.documents.push_back(
        {std::move(rec.fields[id_col]), std::move(rec.fields[text_col]), *label});
  }
  return result;
}

LoadResult load_split(const std::string& path, TableFormat format, const ColumnNames& columns) {
  std::string name = path;
  if (auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
  return parse_split(read_file(path), name, format, columns);
}

TableFormat format_for_path(std::string_view path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".tsv" ? TableFormat::tsv
                                                                     : TableFormat::csv;
}

ClassCounts class_distribution(const DatasetSplit& split) {
  ClassCounts counts;
  for (const auto& doc : split.documents) {
    (doc.label == kReal ? counts.real : counts.fake) += 1;
  }
  return counts;
}

std::string write_split(const DatasetSplit& split, TableFormat format, const ColumnNames& columns) {
  std::string out;
  if (format == TableFormat::tsv) {
    out += columns.id + '\t' + columns.text + '\t' + columns.label + '\n';
    for (const auto& d : split.documents) {
      for (std::string_view f : {std::string_view(d.id), std::string_view(d.text)}) {
        if (f.find_first_of("\t\r\n") != std::string_view::npos) {
          throw Error("document '" + d.id + "' cannot be written as TSV (tab or newline in field)");
        }
      }
      out += d.id + '\t' + d.text + '\t' + std::string(label_name(d.label)) + '\n';
    }
    return out;
  }
  append_csv_field(out, columns.id);
  out.push_back(',');
  append_csv_field(out, columns.text);
  out.push_back(',');
  append_csv_field(out, columns.label);
  out.push_back('\n');
  for (const auto& d : split.documents) {
    append_csv_field(out, d.id);
    out.push_back(',');
    append_csv_field(out, d.text);
    out.push_back(',');
    out.append(label_name(d.label));
    out.push_back('\n');
  }
  return out;
}

SyntheticCorpusConfig synthetic_config_for(std::size_t n_train, std::uint64_t seed) {
  SyntheticCorpusConfig c;
  c.seed = seed;
  c.n_train = n_train;
  c.n_validation = std::max<std::size_t>(1, n_train / 3);
  c.n_test = std::max<std::size_t>(1, n_train / 3);
  return c;
}

namespace {

std::vector<std::string> make_words(std::size_t count, Rng& rng, std::unordered_set<std::string>& used) {
  static constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                                 "r", "s", "t", "v", "z", "br", "gr", "st", "tr"};
  static constexpr std::string_view kVowels[] = {"a", "o", "u", "i", "ai", "ou"};
  static constexpr std::string_view kCodas[] = {"", "", "n", "r", "m", "k", "t", "x"};
  const Stoplist& stop = default_stoplist();
  std::vector<std::string> words;
  words.reserve(count);
  std::uniform_int_distribution<int> syllables(2, 3);
  while (words.size() < count) {
    std::string w;
    int n = syllables(rng);
    for (int s = 0; s < n; ++s) {
      w += kOnsets[rng() % std::size(kOnsets)];
      w += kVowels[rng() % std::size(kVowels)];
    }
    w += kCodas[rng() % std::size(kCodas)];
    if (stop.contains(w) || !used.insert(w).second) continue;
    words.push_back(std::move(w));
  }
  return words;
}

// Zipf-like rank sampler over [0, n).
class ZipfSampler {
 public:
  explicit ZipfSampler(std::size_t n) : cdf_(n) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      total += 1.0 / std::pow(static_cast<double>(i + 1), 0.9);
      cdf_[i] = total;
    }
    for (auto& c : cdf_) c /= total;
  }
  std::size_t operator()(Rng& rng) const {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace

SyntheticLexicon synthetic_lexicon(const SyntheticCorpusConfig& config) {
  Rng rng(derive_seed(config.seed, 0x1e1));
  std::unordered_set<std::string> used;
  SyntheticLexicon lex;
  lex.shared = make_words(config.shared_words, rng, used);
  lex.real_keywords = make_words(config.class_words, rng, used);
  lex.fake_keywords = make_words(config.class_words, rng, used);
  return lex;
}

Corpus generate_synthetic_corpus(const SyntheticCorpusConfig& config) {
  if (config.shared_words == 0 || config.class_words == 0 || config.min_tokens == 0 ||
      config.max_tokens < config.min_tokens) {
    throw ConfigError("invalid synthetic corpus configuration");
  }
  const SyntheticLexicon lex = synthetic_lexicon(config);
  const ZipfSampler shared_rank(lex.shared.size());
  const ZipfSampler keyword_rank(config.class_words);
  static constexpr std::string_view kFillers[] = {"the", "and", "is", "of", "to", "in", "for",
                                                  "this", "that", "are", "was", "with", "our"};
  static constexpr std::string_view kPunct[] = {".", ",", "!", "?", "!!", ":"};

  auto make_split = [&](std::string name, std::size_t n, std::uint64_t stream) {
    DatasetSplit split;
    split.name = std::move(name);
    Rng rng(derive_seed(config.seed, stream));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> length(config.min_tokens, config.max_tokens);
    const auto n_real = static_cast<std::size_t>(std::llround(config.real_fraction * static_cast<double>(n)));
    std::vector<int> labels(n, kFake);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(std::min(n_real, n)), kReal);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      const int label = labels[i];
      const auto& own = label == kReal ? lex.real_keywords : lex.fake_keywords;
      const auto& other = label == kReal ? lex.fake_keywords : lex.real_keywords;
      std::string text;
      const std::size_t len = length(rng);
      for (std::size_t t = 0; t < len; ++t) {
        const double u = unit(rng);
        std::string word;
        if (u < config.own_keyword_rate) {
          word = own[keyword_rank(rng)];
        } else if (u < config.own_keyword_rate + config.other_keyword_rate) {
          word = other[keyword_rank(rng)];
        } else if (u < config.own_keyword_rate + config.other_keyword_rate + 0.2) {
          word = kFillers[rng() % std::size(kFillers)];
        } else if (u < config.own_keyword_rate + config.other_keyword_rate + 0.23) {
          word = std::to_string(rng() % 1000) + (rng() % 2 ? "k" : "");
        } else {
          word = lex.shared[shared_rank(rng)];
        }
        if (t == 0 && !word.empty()) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
        if (!text.empty()) text.push_back(' ');
        text += word;
        if (unit(rng) < 0.08) text += kPunct[rng() % std::size(kPunct)];
      }
      if (unit(rng) < 0.3) {
        char buf[32];
        std::snprintf(buf, sizeof buf, " https://t.co/%08llx", static_cast<unsigned long long>(rng() & 0xffffffffULL));
        text += buf;
      }
      split.documents.push_back({split.name + "-" + std::to_string(i + 1), std::move(text), label});
    }
    return split;
  };

  Corpus corpus;
  corpus.train = make_split("train", config.n_train, 0x7a1);
  corpus.validation = make_split("validation", config.n_validation, 0x7a2);
  corpus.test = make_split("test", config.n_test, 0x7a3);
  return corpus;
}

std::string synthetic_embeddings_text(const SyntheticCorpusConfig& config, std::size_t dim) {
  const SyntheticLexicon lex = synthetic_lexicon(config);
  Rng rng(derive_seed(config.seed, 0xe3b));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> real_dir(dim), fake_dir(dim);
  for (auto& v : real_dir) v = normal(rng);
  for (auto& v : fake_dir) v = normal(rng);
  std::string out;
  char buf[32];
  auto emit = [&](const std::string& word, const std::vector<double>* shift) {
    out += word;
    for (std::size_t k = 0; k < dim; ++k) {
      double v = 0.5 * normal(rng) + (shift ? 0.6 * (*shift)[k] : 0.0);
      std::snprintf(buf, sizeof buf, " %.5f", v);
      out += buf;
    }
    out.push_back('\n');
  };
  for (const auto& w : lex.shared) emit(w, nullptr);
  for (const auto& w : lex.real_keywords) emit(w, &real_dir);
  for (const auto& w : lex.fake_keywords) emit(w, &fake_dir);
  return out;
}

}  // namespace infodemic
