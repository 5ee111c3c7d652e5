#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "infodemic/container.hpp"

using namespace infodemic;

namespace {

ModelContainer sample() {
  ModelContainer c;
  c.architecture = R"({"family":"dnn","layers":[512,256]})";
  c.vocabulary_hash = 0x0123456789abcdefULL;
  c.pipeline_hash = 42;
  c.tensors.push_back({"l0.w", DType::f32, {2, 3}, {0.5, -1.25, 3.0, 0.0, 1e-3, 7.0}});
  c.tensors.push_back({"l0.b", DType::f64, {3}, {0.1, 0.2, 1.0 / 3.0}});
  c.tensors.push_back({"shape", DType::i32, {2}, {-7, 100000}});
  return c;
}

}  // namespace

TEST_CASE("container round trip") {
  auto c = sample();
  auto bytes = encode_container(c);
  CHECK(bytes.substr(0, 4) == "IFDM");
  CHECK(static_cast<unsigned char>(bytes[4]) == kContainerVersion);
  auto back = decode_container(bytes);
  CHECK(back.architecture == c.architecture);
  CHECK(back.vocabulary_hash == c.vocabulary_hash);
  CHECK(back.pipeline_hash == 42);
  REQUIRE(back.tensors.size() == 3);
  CHECK(back.tensor("l0.w").shape == nn::Shape{2, 3});
  CHECK(back.tensor("l0.w").values[4] == static_cast<double>(static_cast<float>(1e-3)));
  CHECK(back.tensor("l0.b").values == c.tensors[1].values);  // f64 is exact
  CHECK(back.tensor("shape").values == std::vector<double>{-7, 100000});
  CHECK(encode_container(back) == bytes);
  CHECK_THROWS_AS(back.tensor("missing"), Error);
}

TEST_CASE("container file io") {
  auto path = (std::filesystem::temp_directory_path() / "infodemic_container_test.ifdm").string();
  save_container(path, sample());
  auto back = load_container(path);
  CHECK(back.tensors.size() == 3);
  std::remove(path.c_str());
}

TEST_CASE("malformed containers are rejected") {
  auto bytes = encode_container(sample());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_container(bad_magic), doctest::Contains("magic"), Error);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_WITH_AS(decode_container(bad_version), doctest::Contains("version"), Error);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
    CHECK_THROWS_AS(decode_container(bytes.substr(0, cut)), Error);
}

TEST_CASE("unknown sections are skipped") {
  auto bytes = encode_container(sample());
  std::string extra = "XTRA";
  for (int i = 0; i < 8; ++i) extra.push_back(i == 0 ? 3 : 0);
  extra += "abc";
  auto back = decode_container(bytes + extra);
  CHECK(back.tensors.size() == 3);
}

TEST_CASE("hash verification explains mismatches") {
  auto c = sample();
  CHECK_NOTHROW(verify_container_hashes(c, c.vocabulary_hash, 42));
  CHECK_THROWS_WITH_AS(verify_container_hashes(c, 1, 42), doctest::Contains("vocabulary"), Error);
  CHECK_THROWS_WITH_AS(verify_container_hashes(c, c.vocabulary_hash, 43), doctest::Contains("preprocessing"), Error);
}
