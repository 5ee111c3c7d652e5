#include "doctest.h"

#include <fstream>
#include <random>
#include <sstream>

#include "infodemic/common.hpp"
#include "infodemic/preprocess.hpp"
#include "infodemic/stemmer.hpp"

using namespace infodemic;

namespace {

const char* kSample =
    "Our daily update is published. States reported 734k tests 39k new cases and 532 deaths. "
    "Current hospitalizations fell below 30k for the first time since June 22. https://t.co/wzSYMe0Sht";

TokenSequence words(const std::string& s) { return tokenize(s); }

std::string random_text(Rng& rng) {
  static const std::string alphabet =
      "abcXYZ019 .,!?-'\"#@\t\n:/()\xC3\xA9\xF0\x9F\x98\x80";
  std::string s;
  const std::size_t len = rng() % 60;
  for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
  if (rng() % 3 == 0) s += " https://t.co/AbC12 ";
  if (rng() % 4 == 0) s += "www.Example.com/x";
  return s;
}

}  // namespace

TEST_CASE("clean reproduces the worked example") {
  CHECK(clean(kSample) ==
        "our daily update is published states reported 734k tests 39k new cases and 532 deaths current "
        "hospitalizations fell below 30k for the first time since june 22");
}

TEST_CASE("clean edge cases") {
  CHECK(clean("") == "");
  CHECK(clean("COVID-19!!!") == "covid19");
  CHECK(clean("  a \t\n b  ") == "a b");
  CHECK(clean("see https://t.co/x and http://a.b/c?d=e") == "see and");
  CHECK(clean("caf\xC3\xA9 \xF0\x9F\x98\x80 ok") == "caf ok");
  CHECK(clean("read more:https://example.org/page") == "read more");
}

TEST_CASE("tokenize splits on whitespace runs") {
  CHECK(tokenize("daily update") == TokenSequence{"daily", "update"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("a  b") == TokenSequence{"a", "b"});
}

TEST_CASE("remove_stopwords reproduces the worked stopword output") {
  auto tokens = remove_stopwords(tokenize(clean(kSample)), default_stoplist());
  CHECK(tokens == words("daily update published states reported 734k tests 39k new cases 532 deaths current "
                        "hospitalizations fell 30k first time since june 22"));
  CHECK(remove_stopwords({"the", "and", "is"}, default_stoplist()).empty());
  CHECK(remove_stopwords({"covid"}, default_stoplist()) == TokenSequence{"covid"});
}

TEST_CASE("stem reproduces the worked stemming output") {
  auto stopped = words("daily update published states reported 734k tests 39k new cases 532 deaths current "
                       "hospitalizations fell 30k first time since june 22");
  CHECK(stem(stopped, true) == words("daili updat publish state report test new case death current hospit fell "
                                     "first time sinc june"));
  CHECK(stem({"swimming"}, true) == TokenSequence{"swim"});
  CHECK(stem({"running", "ran"}, true) == TokenSequence{"run", "ran"});
  CHECK(stem({"39k", "covid19"}, false) == TokenSequence{"39k", "covid19"});
}

TEST_CASE("pipeline composes the stages") {
  CHECK(pipeline(kSample) == words("daili updat publish state report test new case death current hospit fell "
                                   "first time sinc june"));
  CHECK(pipeline("").empty());
  CHECK(pipeline("https://t.co/x").empty());
  PreprocessConfig no_stem;
  no_stem.stem = false;
  CHECK(pipeline("Swimming in 2020 pools", no_stem) == TokenSequence{"swimming", "pools"});
}

TEST_CASE("bundled stoplist has 179 entries and matches the data file") {
  CHECK(default_stoplist().size() == 179);
  auto from_file = Stoplist::from_file(INFODEMIC_STOPLIST_FILE);
  CHECK(from_file.words() == default_stoplist().words());
  CHECK(from_file.hash() == default_stoplist().hash());
}

TEST_CASE("custom stoplist changes the pipeline hash") {
  PreprocessConfig a, b;
  b.drop_numeric = false;
  CHECK(a.hash() != b.hash());
  CHECK(a.hash() == PreprocessConfig{}.hash());
}

TEST_CASE("property: clean is idempotent and pipeline output obeys its invariants") {
  Rng rng(20240601);
  for (int i = 0; i < 2000; ++i) {
    const std::string text = random_text(rng);
    const std::string once = clean(text);
    CHECK(clean(once) == once);
    for (char c : once) CHECK(((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == ' '));
    for (const auto& tok : pipeline(text)) {
      CHECK_FALSE(default_stoplist().contains(tok));
      CHECK(tok.find_first_of("0123456789") == std::string::npos);
      CHECK_FALSE(tok.empty());
    }
  }
}

TEST_CASE("snowball english stemmer agrees with the reference vocabulary") {
  std::ifstream in(std::string(INFODEMIC_TEST_DATA) + "/snowball_english_vocabulary.tsv");
  REQUIRE(in);
  std::string line;
  std::size_t total = 0, agree = 0;
  std::ostringstream mismatches;
  while (std::getline(in, line)) {
    auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    const std::string word = line.substr(0, tab), expected = line.substr(tab + 1);
    ++total;
    const std::string got = snowball_english_stem(word);
    if (got == expected) {
      ++agree;
    } else if (total - agree <= 20) {
      mismatches << word << " -> " << got << " (expected " << expected << ")\n";
    }
  }
  INFO(mismatches.str());
  CHECK(total == 29417);
  CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.999);
  CHECK(agree == total);
}
