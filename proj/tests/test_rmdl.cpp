#include "doctest.h"

#include <filesystem>

#include "infodemic/rmdl.hpp"

using namespace infodemic;
using namespace infodemic::rmdl;

namespace {

constexpr std::size_t kWords = 8;
constexpr std::size_t kLen = 6;
constexpr std::size_t kCols = 300;

EmbeddingTable toy_table() {
  Rng rng(42);
  std::normal_distribution<double> normal(0, 0.5);
  EmbeddingTable t(4);
  for (std::size_t w = 0; w < kWords; ++w) {
    std::vector<double> v(4);
    for (auto& x : v) x = normal(rng);
    t.add("w" + std::to_string(w), v);
  }
  return t;
}

// Same documents seen as TF-IDF rows and as index sequences.
EnsembleData toy_data(const EmbeddingTable& table, std::uint64_t seed) {
  EnsembleData d;
  d.embeddings = &table;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  const std::array<std::size_t, 3> sizes{40, 16, 16};
  for (std::size_t s = 0; s < 3; ++s) {
    auto& tf = d.tfidf[s];
    auto& seq = d.sequences[s];
    tf.mode = neural::InputMode::tfidf_vector;
    tf.tfidf = SparseMatrix(kCols);
    seq.mode = neural::InputMode::embedding_sequence;
    for (std::size_t i = 0; i < sizes[s]; ++i) {
      const int label = static_cast<int>(rng() % 2);
      std::vector<double> row(kCols, 0.0);
      IndexSequence q;
      for (std::size_t t = 0; t < kLen; ++t) {
        const bool own = u(rng) < 0.85;
        const std::uint32_t word = static_cast<std::uint32_t>((own == (label == 1) ? 4 : 0) + rng() % 4);
        q.indices.push_back(word + 1);
        row[word * 37] += 0.3;
      }
      q.true_length = kLen;
      tf.tfidf.append_dense_row(row);
      tf.labels.push_back(label);
      seq.sequences.push_back(q);
      seq.labels.push_back(label);
    }
    d.rnn_sequences[s] = seq;
  }
  return d;
}

EnsembleConfig toy_config() {
  EnsembleConfig c;
  c.dnn = {2, 3, 4, 8};
  c.cnn = {2, 3, 3, 6};
  c.rnn = {1, 2, 3, 6};
  c.min_kernel = 2;
  c.max_kernel = 3;
  c.max_len = kLen;
  c.rnn_max_len = kLen;
  c.epochs = 3;
  c.batch_size = 8;
  c.learning_rate = 0.01;
  c.seed = 7;
  return c;
}

std::vector<int> brute_majority(const std::vector<std::vector<int>>& m, std::size_t row) {
  std::size_t ones = 0, zeros = 0;
  for (const auto& p : m) (p[row] == 1 ? ones : zeros)++;
  return {ones > zeros ? 1 : 0, ones == zeros ? 1 : 0};
}

}  // namespace

TEST_CASE("vote") {
  std::vector<std::vector<int>> agree{{1, 0, 1}, {1, 0, 1}, {1, 0, 1}};
  CHECK(vote(agree) == std::vector<int>{1, 0, 1});
  std::vector<std::vector<int>> split(9, std::vector<int>{0});
  for (int i = 0; i < 5; ++i) split[i][0] = 1;
  CHECK(vote(split) == std::vector<int>{1});
  for (int i = 0; i < 9; ++i) split[i][0] = i < 4;
  CHECK(vote(split) == std::vector<int>{0});

  std::vector<std::vector<int>> even(4, std::vector<int>{1});
  CHECK_THROWS_AS(vote(even), ConfigError);
  CHECK_THROWS_AS(vote(std::vector<std::vector<int>>{}), ConfigError);
  CHECK_THROWS_AS(vote(std::vector<std::vector<int>>{{1, 0}, {1}, {0, 0}}), ShapeError);
  CHECK_THROWS_AS(vote(std::vector<std::vector<int>>{{2}}), Error);
}

TEST_CASE("vote equals a brute-force majority on random prediction matrices") {
  Rng rng(2024);
  std::size_t rows_checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t members = 1 + 2 * (rng() % 6);
    const std::size_t rows = 1 + rng() % 40;
    std::vector<std::vector<int>> m(members, std::vector<int>(rows));
    for (auto& p : m)
      for (auto& v : p) v = static_cast<int>(rng() % 2);
    const auto got = vote(m);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto oracle = brute_majority(m, r);
      CHECK(oracle[1] == 0);  // odd count never ties
      if (got[r] != oracle[0]) FAIL_CHECK("row " << r << " of trial " << trial);
      ++rows_checked;
    }
  }
  CHECK(rows_checked > 10000);
}

TEST_CASE("sample_architectures") {
  const InputShape shape{kCols, kWords + 1, 4};
  auto c = toy_config();
  auto a = sample_architectures(c, shape);
  REQUIRE(a.size() == 9);
  CHECK(sample_architectures(c, shape).size() == 9);
  const auto b = sample_architectures(c, shape);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(a[i].architecture == b[i].architecture);
    CHECK(a[i].nodes == b[i].nodes);
  }
  const std::vector<std::string> names{"DNN-0", "DNN-1", "DNN-2", "CNN-0", "CNN-1", "CNN-2", "RNN-0", "RNN-1", "RNN-2"};
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(a[i].name() == names[i]);
    const auto& arch = a[i].architecture;
    const bool dnn = a[i].family == ModelKind::dnn;
    CHECK((arch.input == neural::InputMode::tfidf_vector) == dnn);
    CHECK(arch.family == a[i].family);
    const auto& r = i < 3 ? c.dnn : i < 6 ? c.cnn : c.rnn;
    CHECK(a[i].layers >= r.min_layers);
    CHECK(a[i].layers <= r.max_layers);
    CHECK(a[i].nodes.size() == a[i].layers);
    for (auto n : a[i].nodes) {
      CHECK(n >= r.min_nodes);
      CHECK(n <= r.max_nodes);
    }
    std::size_t hidden = 0;
    for (const auto& l : arch.layers)
      if (l.kind == neural::LayerKind::dense && l.relu) ++hidden;
      else if (l.kind == neural::LayerKind::conv1d || l.kind == neural::LayerKind::gru ||
               l.kind == neural::LayerKind::lstm)
        ++hidden;
    CHECK(hidden == a[i].layers);
  }

  c.seed = 8;
  auto other = sample_architectures(c, shape);
  bool differs = false;
  for (std::size_t i = 0; i < 9; ++i) differs |= other[i].nodes != a[i].nodes;
  CHECK(differs);

  SUBCASE("degenerate ranges give identical members per family") {
    c.dnn = c.cnn = c.rnn = {2, 2, 64, 64};
    c.min_kernel = c.max_kernel = 3;
    c.rnn_cells = {ModelKind::rnn_lstm};
    auto s = sample_architectures(c, shape);
    for (std::size_t i = 0; i < 9; ++i) CHECK(s[i].architecture == s[i - i % 3].architecture);
  }
  SUBCASE("kernels longer than the sequence are redrawn") {
    c.max_len = 4;
    c.min_kernel = 2;
    c.max_kernel = 8;
    c.cnn = {2, 2, 3, 3};
    auto s = sample_architectures(c, shape);
    std::size_t redraws = 0;
    for (const auto& m : s) {
      for (auto k : m.kernels) CHECK(k <= 4);
      redraws += m.draws - 1;
    }
    CHECK(redraws > 0);
    c.min_kernel = 5;
    CHECK_THROWS_WITH_AS(sample_architectures(c, shape), doctest::Contains("attempts"), ConfigError);
  }
  SUBCASE("configuration errors") {
    c.rnn_models = 2;
    CHECK_THROWS_AS(sample_architectures(c, shape), ConfigError);
    c.rnn_models = 3;
    c.dnn = {3, 2, 4, 8};
    CHECK_THROWS_AS(sample_architectures(c, shape), ConfigError);
    c.dnn = {2, 3, 4, 8};
    c.rnn_cells = {ModelKind::cnn};
    CHECK_THROWS_AS(sample_architectures(c, shape), ConfigError);
  }
}

TEST_CASE("train_ensemble") {
  const auto table = toy_table();
  const auto data = toy_data(table, 3);
  auto c = toy_config();
  const auto a = train_ensemble(c, data);
  REQUIRE(a.members.size() == 9);
  CHECK(a.voting_members() == 9);
  CHECK(a.test_predictions.size() == 16);

  std::vector<std::vector<int>> preds;
  for (const auto& m : a.members) {
    CHECK(m.history.size() == c.epochs);
    CHECK(m.network.has_value());
    CHECK(m.attempts == 1);
    preds.push_back(m.test_predictions);
  }
  CHECK(vote(preds) == a.test_predictions);
  CHECK(predict(a, data, Split::test) == a.test_predictions);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < 16; ++i) hit += a.test_predictions[i] == data.tfidf[2].labels[i];
  CHECK(a.combined_accuracy == doctest::Approx(hit / 16.0));
  MESSAGE("toy ensemble accuracy " << a.combined_accuracy);

  const auto table_text = member_table(a);
  CHECK(std::count(table_text.begin(), table_text.end(), '\n') == 2 + 9 + 1);
  CHECK(table_text.find("| RNN-2 |") != std::string::npos);

  c.workers = 3;
  const auto b = train_ensemble(c, data);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(a.members[i].test_accuracy == b.members[i].test_accuracy);
    CHECK(a.members[i].history.back().train_loss == b.members[i].history.back().train_loss);
  }
  CHECK(a.test_predictions == b.test_predictions);

  SUBCASE("persistence") {
    const auto dir = (std::filesystem::temp_directory_path() / "infodemic_rmdl_test").string();
    std::filesystem::remove_all(dir);
    save_ensemble(a, dir, 11, 22);
    CHECK(std::filesystem::exists(dir + "/manifest.json"));
    CHECK(std::filesystem::exists(dir + "/CNN-1.ifdm"));
    const auto back = load_ensemble(dir, 11, 22);
    REQUIRE(back.members.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(back.members[i].spec.architecture == a.members[i].spec.architecture);
      CHECK(back.members[i].train_seed == a.members[i].train_seed);
    }
    CHECK(predict(back, data, Split::test).size() == 16);
    CHECK_THROWS_AS(load_ensemble(dir, 12, 22), Error);
    std::filesystem::remove_all(dir);
  }
  SUBCASE("divergence everywhere") {
    c.abort_loss = 1e-9;
    c.workers = 1;
    CHECK_THROWS_AS(train_ensemble(c, data), NonFiniteError);
  }
  SUBCASE("embedding members need a table") {
    auto no_table = data;
    no_table.embeddings = nullptr;
    CHECK_THROWS_AS(train_ensemble(c, no_table), ConfigError);
  }
}

TEST_CASE("excluding a member keeps the vote odd") {
  EnsembleModel m;
  const std::array<ModelKind, 9> fam{ModelKind::dnn, ModelKind::dnn, ModelKind::dnn, ModelKind::cnn, ModelKind::cnn,
                                     ModelKind::cnn, ModelKind::rnn_gru, ModelKind::rnn_lstm, ModelKind::rnn_gru};
  const std::array<double, 9> val{0.9, 0.8, 0.7, 0.95, 0.6, 0.85, 0.5, 0.75, 0.65};
  for (std::size_t i = 0; i < 9; ++i) {
    EnsembleMember e;
    e.spec.family = fam[i];
    e.spec.ordinal = i % 3;
    e.validation_accuracy = val[i];
    m.members.push_back(e);
  }
  enforce_odd_vote(m);
  CHECK(m.voting_members() == 9);

  m.members[3].excluded = true;  // CNN-0 diverged
  enforce_odd_vote(m);
  CHECK(m.voting_members() == 7);
  CHECK(m.members[4].excluded);  // weakest remaining CNN
  CHECK(m.warnings.size() == 1);

  m.members[6].excluded = true;  // an RNN diverged; GRU and LSTM count as one family
  enforce_odd_vote(m);
  CHECK(m.voting_members() == 5);
  CHECK(m.members[8].excluded);

  for (auto& e : m.members) e.excluded = true;
  CHECK_THROWS_AS(enforce_odd_vote(m), NonFiniteError);
}
