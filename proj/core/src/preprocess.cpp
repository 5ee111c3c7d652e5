#include "infodemic/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "infodemic/common.hpp"
#include "infodemic/stemmer.hpp"

namespace infodemic {
namespace {

constexpr std::array<std::string_view, 179> kEnglishStopwords = {
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
    "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his",
    "himself", "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself",
    "they", "them", "their", "theirs", "themselves", "what", "which", "who", "whom", "this",
    "that", "that'll", "these", "those", "am", "is", "are", "was", "were", "be", "been",
    "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an", "the",
    "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by", "for",
    "with", "about", "against", "between", "into", "through", "during", "before", "after",
    "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over", "under",
    "again", "further", "then", "once", "here", "there", "when", "where", "why", "how",
    "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
    "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can",
    "will", "just", "don", "don't", "should", "should've", "now", "d", "ll", "m", "o", "re",
    "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn", "didn't", "doesn",
    "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn", "isn't", "ma",
    "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
    "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn",
    "wouldn't"};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool has_digit(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// Offset of the first URL marker inside a whitespace-free chunk, or npos.
std::size_t url_start(std::string_view chunk) {
  std::size_t best = std::string_view::npos;
  for (std::string_view marker : {"http://", "https://", "www.", "t.co/"}) {
    best = std::min(best, chunk.find(marker));
  }
  return best;
}

}  // namespace

Stoplist::Stoplist(std::vector<std::string> words) {
  for (auto& w : words) {
    if (words_.insert(w).second) ordered_.push_back(std::move(w));
  }
}

Stoplist Stoplist::from_text(std::string_view text) {
  std::vector<std::string> words;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    while (!line.empty() && is_space(line.back())) line.remove_suffix(1);
    while (!line.empty() && is_space(line.front())) line.remove_prefix(1);
    if (!line.empty()) words.emplace_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return Stoplist(std::move(words));
}

Stoplist Stoplist::from_file(const std::string& path) { return from_text(read_file(path)); }

bool Stoplist::contains(std::string_view word) const { return words_.count(std::string(word)) > 0; }

std::uint64_t Stoplist::hash() const {
  std::uint64_t h = fnv1a64("stoplist");
  for (const auto& w : ordered_) h = fnv1a64(w + '\n', h);
  return h;
}

const Stoplist& default_stoplist() {
  static const Stoplist list{std::vector<std::string>(kEnglishStopwords.begin(), kEnglishStopwords.end())};
  return list;
}

std::uint64_t PreprocessConfig::hash() const { return Preprocessor(*this).hash(); }

std::string clean(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char c) {
    return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
  });

  std::string out;
  out.reserve(lowered.size());
  std::size_t i = 0;
  while (i < lowered.size()) {
    while (i < lowered.size() && is_space(lowered[i])) ++i;
    std::size_t start = i;
    while (i < lowered.size() && !is_space(lowered[i])) ++i;
    std::string_view chunk = std::string_view(lowered).substr(start, i - start);
    chunk = chunk.substr(0, url_start(chunk));
    std::string kept;
    for (char c : chunk) {
      if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) kept.push_back(c);
    }
    if (kept.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += kept;
  }
  return out;
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

TokenSequence remove_stopwords(const TokenSequence& tokens, const Stoplist& stoplist) {
  TokenSequence out;
  out.reserve(tokens.size());
  std::copy_if(tokens.begin(), tokens.end(), std::back_inserter(out),
               [&](const std::string& t) { return !stoplist.contains(t); });
  return out;
}

TokenSequence drop_numeric_tokens(const TokenSequence& tokens) {
  TokenSequence out;
  out.reserve(tokens.size());
  std::copy_if(tokens.begin(), tokens.end(), std::back_inserter(out),
               [](const std::string& t) { return !has_digit(t); });
  return out;
}

TokenSequence stem(const TokenSequence& tokens, bool drop_numeric) {
  TokenSequence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (drop_numeric && has_digit(t)) continue;
    out.push_back(snowball_english_stem(t));
  }
  return out;
}

Preprocessor::Preprocessor(PreprocessConfig config)
    : config_(std::move(config)),
      stoplist_(config_.stoplist_path.empty() ? default_stoplist()
                                              : Stoplist::from_file(config_.stoplist_path)) {}

TokenSequence Preprocessor::operator()(std::string_view text) const {
  TokenSequence tokens = remove_stopwords(tokenize(clean(text)), stoplist_);
  if (config_.stem) return stem(tokens, config_.drop_numeric);
  return config_.drop_numeric ? drop_numeric_tokens(tokens) : tokens;
}

std::uint64_t Preprocessor::hash() const {
  std::uint64_t h = fnv1a64("preprocess/v1");
  h = fnv1a64(config_.drop_numeric ? "drop_numeric=1;" : "drop_numeric=0;", h);
  h = fnv1a64(config_.stem ? "stem=1;" : "stem=0;", h);
  return mix64(h ^ stoplist_.hash());
}

TokenSequence pipeline(std::string_view text, const PreprocessConfig& config) {
  return Preprocessor(config)(text);
}

}  // namespace infodemic
