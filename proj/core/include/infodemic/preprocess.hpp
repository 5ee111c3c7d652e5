#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace infodemic {

/// Lowercase token strings, in text order.
using TokenSequence = std::vector<std::string>;

class Stoplist {
 public:
  Stoplist() = default;
  explicit Stoplist(std::vector<std::string> words);

  /// One lowercase word per line; blank lines ignored.
  static Stoplist from_text(std::string_view text);
  static Stoplist from_file(const std::string& path);

  bool contains(std::string_view word) const;
  std::size_t size() const noexcept { return words_.size(); }
  /// Words in their original order.
  const std::vector<std::string>& words() const noexcept { return ordered_; }
  std::uint64_t hash() const;

 private:
  std::vector<std::string> ordered_;
  std::unordered_set<std::string> words_;
};

/// The bundled 179-word English stoplist (identical to core/data/stopwords_en.txt).
const Stoplist& default_stoplist();

struct PreprocessConfig {
  bool drop_numeric = true;
  /// Stemming is switched off for the embedding featurizers, whose lookup
  /// tables are keyed by surface forms.
  bool stem = true;
  /// Empty means the bundled list.
  std::string stoplist_path;

  /// Stable digest over every field that changes pipeline output.
  std::uint64_t hash() const;
};

/// Lowercases, strips URLs (http://, https://, www., t.co/), then removes every
/// character outside [a-z0-9 ] and collapses whitespace.
std::string clean(std::string_view text);

/// Splits on runs of whitespace.
TokenSequence tokenize(std::string_view text);

TokenSequence remove_stopwords(const TokenSequence& tokens, const Stoplist& stoplist);

/// Snowball English stems; with `drop_numeric`, tokens containing a digit are
/// removed first.
TokenSequence stem(const TokenSequence& tokens, bool drop_numeric);

/// Drops digit-bearing tokens without stemming (the unstemmed pipeline still
/// honours drop_numeric).
TokenSequence drop_numeric_tokens(const TokenSequence& tokens);

class Preprocessor {
 public:
  explicit Preprocessor(PreprocessConfig config = {});

  TokenSequence operator()(std::string_view text) const;
  const PreprocessConfig& config() const noexcept { return config_; }
  const Stoplist& stoplist() const noexcept { return stoplist_; }
  std::uint64_t hash() const;

 private:
  PreprocessConfig config_;
  Stoplist stoplist_;
};

/// clean -> tokenize -> remove_stopwords -> stem.
TokenSequence pipeline(std::string_view text, const PreprocessConfig& config = {});

}  // namespace infodemic
