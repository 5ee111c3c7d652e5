#include "doctest.h"

#include "infodemic/common.hpp"
#include "infodemic/corpus.hpp"

using namespace infodemic;

TEST_CASE("single csv row parses with label real -> 1") {
  auto r = parse_split("id,tweet,label\n1,masks work,real\n", "train", TableFormat::csv);
  REQUIRE(r.split.documents.size() == 1);
  CHECK(r.split.documents[0].id == "1");
  CHECK(r.split.documents[0].text == "masks work");
  CHECK(r.split.documents[0].label == kReal);
  CHECK(r.skipped.empty());
}

TEST_CASE("labels are trimmed and case-insensitive") {
  auto r = parse_split("id,tweet,label\n1,a,Fake \n2,b,REAL\n", "t", TableFormat::csv);
  REQUIRE(r.split.documents.size() == 2);
  CHECK(r.split.documents[0].label == kFake);
  CHECK(r.split.documents[1].label == kReal);
}

TEST_CASE("RFC 4180 quoting keeps commas, quotes and newlines inside text") {
  const char* csv =
      "id,tweet,label\n"
      "1,\"Masks, gloves and \"\"hand\"\" wash\",real\n"
      "2,\"line one\nline two\",fake\n"
      "3,plain,bogus\n";
  auto r = parse_split(csv, "t", TableFormat::csv);
  REQUIRE(r.split.documents.size() == 2);
  CHECK(r.split.documents[0].text == "Masks, gloves and \"hand\" wash");
  CHECK(r.split.documents[1].text == "line one\nline two");
  REQUIRE(r.skipped.size() == 1);
  // The multi-line record occupies lines 3-4, so the bad row starts on line 5.
  CHECK(r.skipped[0].line == 5);
  CHECK(r.skipped[0].message.find("bogus") != std::string::npos);
}

TEST_CASE("columns are located by header name and may be renamed") {
  auto r = parse_split("label\tbody\tkey\nreal\thello there\tk1\n", "t", TableFormat::tsv,
                       ColumnNames{"key", "body", "label"});
  REQUIRE(r.split.documents.size() == 1);
  CHECK(r.split.documents[0].id == "k1");
  CHECK(r.split.documents[0].text == "hello there");
}

TEST_CASE("TSV mode does not interpret quotes") {
  auto r = parse_split("id\ttweet\tlabel\n1\t\"quoted\" text\tfake\n", "t", TableFormat::tsv);
  REQUIRE(r.split.documents.size() == 1);
  CHECK(r.split.documents[0].text == "\"quoted\" text");
}

TEST_CASE("missing column is a fatal configuration error") {
  CHECK_THROWS_AS(parse_split("id,text,label\n1,x,real\n", "t", TableFormat::csv), ConfigError);
}

TEST_CASE("empty text and duplicate ids are skipped and counted") {
  auto r = parse_split("id,tweet,label\n1,   ,real\n2,ok,fake\n2,dup,real\n", "t", TableFormat::csv);
  CHECK(r.split.documents.size() == 1);
  CHECK(r.skipped.size() == 2);
}

TEST_CASE("class_distribution") {
  CHECK(class_distribution(DatasetSplit{}) == ClassCounts{0, 0});
  auto r = parse_split("id,tweet,label\n1,a,real\n2,b,fake\n3,c,real\n", "t", TableFormat::csv);
  auto c = class_distribution(r.split);
  CHECK(c.real == 2);
  CHECK(c.fake == 1);
}

TEST_CASE("loading is deterministic and round-trips through csv and tsv") {
  auto corpus = generate_synthetic_corpus(synthetic_config_for(120, 7));
  for (auto format : {TableFormat::csv, TableFormat::tsv}) {
    const std::string bytes = write_split(corpus.train, format);
    auto a = parse_split(bytes, "train", format);
    auto b = parse_split(bytes, "train", format);
    CHECK(a.split == b.split);
    CHECK(a.split == corpus.train);
    CHECK(a.skipped.empty());
  }
  DatasetSplit tricky{"x", {{"1", "comma, \"quote\"\nnewline", kReal}}};
  CHECK(parse_split(write_split(tricky, TableFormat::csv), "x", TableFormat::csv).split == tricky);
}

TEST_CASE("synthetic corpus has the public dataset's split shape") {
  auto corpus = generate_synthetic_corpus(SyntheticCorpusConfig{});
  CHECK(corpus.train.documents.size() == 6420);
  CHECK(corpus.validation.documents.size() == 2140);
  CHECK(corpus.test.documents.size() == 2140);
  CHECK(class_distribution(corpus.train) == ClassCounts{3360, 3060});
  CHECK(class_distribution(corpus.validation) == ClassCounts{1120, 1020});
  CHECK(class_distribution(corpus.test) == ClassCounts{1120, 1020});
}

TEST_CASE("synthetic generator is seeded") {
  auto a = generate_synthetic_corpus(synthetic_config_for(60, 3));
  auto b = generate_synthetic_corpus(synthetic_config_for(60, 3));
  auto c = generate_synthetic_corpus(synthetic_config_for(60, 4));
  CHECK(a.train == b.train);
  CHECK_FALSE(a.train == c.train);
  CHECK(a.validation.documents.size() == 20);
}

TEST_CASE("label column may be optional for unlabeled input") {
  ColumnNames cols;
  cols.label_required = false;
  auto r = parse_split("id,tweet\n1,hello there\n2,\n", "in", TableFormat::csv, cols);
  REQUIRE(r.split.documents.size() == 1);
  CHECK(r.split.documents[0].label == kFake);
  CHECK(r.skipped.size() == 1);
  auto labeled = parse_split("id,tweet,label\n1,hi,real\n", "in", TableFormat::csv, cols);
  CHECK(labeled.split.documents[0].label == kReal);
  CHECK_THROWS_AS(parse_split("id,tweet\n1,hi\n", "in", TableFormat::csv), ConfigError);
}
