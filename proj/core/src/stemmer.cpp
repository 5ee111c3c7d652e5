#include "infodemic/stemmer.hpp"

#include <algorithm>
#include <array>
#include <initializer_list>
#include <utility>

namespace infodemic {
namespace {

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
}

// Vowels plus w, x and the marked consonant Y.
bool is_vowel_wxy(char c) { return is_vowel(c) || c == 'w' || c == 'x' || c == 'Y'; }

bool is_valid_li(char c) {
  switch (c) {
    case 'c': case 'd': case 'e': case 'g': case 'h':
    case 'k': case 'm': case 'n': case 'r': case 't':
      return true;
    default:
      return false;
  }
}

bool ends_with(const std::string& w, std::string_view suffix) {
  return w.size() >= suffix.size() && std::string_view(w).substr(w.size() - suffix.size()) == suffix;
}

// Longest suffix of `w` among `options`, or empty view when none matches.
std::string_view longest_suffix(const std::string& w, std::initializer_list<std::string_view> options) {
  std::string_view best;
  bool found = false;
  for (auto s : options) {
    if (ends_with(w, s) && (!found || s.size() > best.size())) {
      best = s;
      found = true;
    }
  }
  return found ? best : std::string_view{};
}

class Porter2 {
 public:
  explicit Porter2(std::string word) : w_(std::move(word)) {}

  std::string run() {
    prelude();
    mark_regions();
    step_1a();
    if (!is_exception2()) {
      step_1b();
      step_1c();
      step_2();
      step_3();
      step_4();
      step_5();
    }
    std::replace(w_.begin(), w_.end(), 'Y', 'y');
    return std::move(w_);
  }

 private:
  std::string w_;
  std::size_t p1_ = 0;
  std::size_t p2_ = 0;

  void prelude() {
    if (!w_.empty() && w_.front() == '\'') w_.erase(0, 1);
    if (!w_.empty() && w_.front() == 'y') w_.front() = 'Y';
    for (std::size_t i = 1; i < w_.size(); ++i) {
      if (w_[i] == 'y' && is_vowel(w_[i - 1])) w_[i] = 'Y';
    }
  }

  // Position just past the first non-vowel that follows a vowel, from `start`.
  std::size_t region_after(std::size_t start) const {
    std::size_t i = start;
    while (i < w_.size() && !is_vowel(w_[i])) ++i;
    if (i >= w_.size()) return w_.size();
    while (i < w_.size() && is_vowel(w_[i])) ++i;
    if (i >= w_.size()) return w_.size();
    return i + 1;
  }

  void mark_regions() {
    p1_ = w_.size();
    p2_ = w_.size();
    bool prefixed = false;
    for (std::string_view prefix : {"gener", "commun", "arsen"}) {
      if (std::string_view(w_).starts_with(prefix)) {
        p1_ = prefix.size();
        prefixed = true;
        break;
      }
    }
    if (!prefixed) p1_ = region_after(0);
    p2_ = p1_ >= w_.size() ? w_.size() : region_after(p1_);
  }

  // Short syllable ending at position `end` (exclusive).
  bool ends_in_short_syllable(std::size_t end) const {
    if (end >= 3 && !is_vowel_wxy(w_[end - 1]) && is_vowel(w_[end - 2]) && !is_vowel(w_[end - 3])) {
      return true;
    }
    return end == 2 && !is_vowel(w_[1]) && is_vowel(w_[0]);
  }

  bool in_r1(std::size_t suffix_len) const { return w_.size() - suffix_len >= p1_; }
  bool in_r2(std::size_t suffix_len) const { return w_.size() - suffix_len >= p2_; }

  void replace_suffix(std::size_t len, std::string_view with) {
    w_.resize(w_.size() - len);
    w_.append(with);
  }

  void step_1a() {
    if (auto s = longest_suffix(w_, {"'", "'s", "'s'"}); !s.empty()) replace_suffix(s.size(), "");
    auto s = longest_suffix(w_, {"sses", "ied", "ies", "s", "us", "ss"});
    if (s.empty() || s == "us" || s == "ss") return;
    if (s == "sses") {
      replace_suffix(4, "ss");
    } else if (s == "ied" || s == "ies") {
      replace_suffix(3, w_.size() - 3 >= 2 ? "i" : "ie");
    } else {
      // 's': delete if a vowel occurs before the letter preceding the s.
      if (w_.size() < 2) return;
      const std::size_t limit = w_.size() - 2;
      if (std::any_of(w_.begin(), w_.begin() + static_cast<std::ptrdiff_t>(limit), is_vowel)) {
        replace_suffix(1, "");
      }
    }
  }

  bool is_exception2() const {
    static constexpr std::array<std::string_view, 8> kWords = {
        "inning", "outing", "canning", "herring", "earring", "proceed", "exceed", "succeed"};
    return std::find(kWords.begin(), kWords.end(), std::string_view(w_)) != kWords.end();
  }

  void step_1b() {
    auto s = longest_suffix(w_, {"eed", "eedly", "ed", "edly", "ing", "ingly"});
    if (s.empty()) return;
    if (s == "eed" || s == "eedly") {
      if (in_r1(s.size())) replace_suffix(s.size(), "ee");
      return;
    }
    const std::size_t stem_len = w_.size() - s.size();
    if (!std::any_of(w_.begin(), w_.begin() + static_cast<std::ptrdiff_t>(stem_len), is_vowel)) return;
    w_.resize(stem_len);
    if (ends_with(w_, "at") || ends_with(w_, "bl") || ends_with(w_, "iz")) {
      w_.push_back('e');
      return;
    }
    for (std::string_view dbl : {"bb", "dd", "ff", "gg", "mm", "nn", "pp", "rr", "tt"}) {
      if (ends_with(w_, dbl)) {
        w_.pop_back();
        return;
      }
    }
    if (w_.size() == p1_ && ends_in_short_syllable(w_.size())) w_.push_back('e');
  }

  void step_1c() {
    if (w_.size() < 3) return;
    char last = w_.back();
    if ((last == 'y' || last == 'Y') && !is_vowel(w_[w_.size() - 2])) w_.back() = 'i';
  }

  void step_2() {
    static constexpr std::pair<std::string_view, std::string_view> kRules[] = {
        {"tional", "tion"}, {"enci", "ence"},  {"anci", "ance"},   {"abli", "able"},
        {"entli", "ent"},   {"izer", "ize"},   {"ization", "ize"}, {"ational", "ate"},
        {"ation", "ate"},   {"ator", "ate"},   {"alism", "al"},    {"aliti", "al"},
        {"alli", "al"},     {"fulness", "ful"}, {"ousli", "ous"},  {"ousness", "ous"},
        {"iveness", "ive"}, {"iviti", "ive"},  {"biliti", "ble"},  {"bli", "ble"},
        {"ogi", "og"},      {"fulli", "ful"},  {"lessli", "less"}, {"li", ""}};
    const std::pair<std::string_view, std::string_view>* best = nullptr;
    for (const auto& rule : kRules) {
      if (ends_with(w_, rule.first) && (!best || rule.first.size() > best->first.size())) best = &rule;
    }
    if (!best || !in_r1(best->first.size())) return;
    const std::size_t stem_len = w_.size() - best->first.size();
    if (best->first == "ogi") {
      if (stem_len >= 1 && w_[stem_len - 1] == 'l') replace_suffix(3, "og");
    } else if (best->first == "li") {
      if (stem_len >= 1 && is_valid_li(w_[stem_len - 1])) replace_suffix(2, "");
    } else {
      replace_suffix(best->first.size(), best->second);
    }
  }

  void step_3() {
    static constexpr std::pair<std::string_view, std::string_view> kRules[] = {
        {"tional", "tion"}, {"ational", "ate"}, {"alize", "al"}, {"icate", "ic"}, {"iciti", "ic"},
        {"ical", "ic"},     {"ful", ""},        {"ness", ""},    {"ative", ""}};
    const std::pair<std::string_view, std::string_view>* best = nullptr;
    for (const auto& rule : kRules) {
      if (ends_with(w_, rule.first) && (!best || rule.first.size() > best->first.size())) best = &rule;
    }
    if (!best || !in_r1(best->first.size())) return;
    if (best->first == "ative" && !in_r2(5)) return;
    replace_suffix(best->first.size(), best->second);
  }

  void step_4() {
    auto s = longest_suffix(w_, {"al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
                                 "ment", "ent", "ism", "ate", "iti", "ous", "ive", "ize", "ion"});
    if (s.empty() || !in_r2(s.size())) return;
    if (s == "ion") {
      const std::size_t stem_len = w_.size() - 3;
      if (stem_len == 0 || (w_[stem_len - 1] != 's' && w_[stem_len - 1] != 't')) return;
    }
    replace_suffix(s.size(), "");
  }

  void step_5() {
    if (w_.empty()) return;
    if (w_.back() == 'e') {
      if (in_r2(1) || (in_r1(1) && !ends_in_short_syllable(w_.size() - 1))) w_.pop_back();
    } else if (w_.back() == 'l') {
      if (in_r2(1) && w_.size() >= 2 && w_[w_.size() - 2] == 'l') w_.pop_back();
    }
  }
};

}  // namespace

std::string snowball_english_stem(std::string_view word) {
  static constexpr std::pair<std::string_view, std::string_view> kExceptions[] = {
      {"skis", "ski"},   {"skies", "sky"},    {"dying", "die"},   {"lying", "lie"},
      {"tying", "tie"},  {"idly", "idl"},     {"gently", "gentl"}, {"ugly", "ugli"},
      {"early", "earli"}, {"only", "onli"},   {"singly", "singl"}, {"sky", "sky"},
      {"news", "news"},  {"howe", "howe"},    {"atlas", "atlas"}, {"cosmos", "cosmos"},
      {"bias", "bias"},  {"andes", "andes"}};
  for (const auto& [from, to] : kExceptions) {
    if (word == from) return std::string(to);
  }
  if (word.size() < 3) return std::string(word);
  return Porter2(std::string(word)).run();
}

}  // namespace infodemic
