#include "doctest.h"

#include <cmath>
#include <numeric>

#include "infodemic/corpus.hpp"
#include "infodemic/models_neural.hpp"
#include "infodemic/nn/gradcheck.hpp"

using namespace infodemic;
using namespace infodemic::neural;

namespace {

constexpr std::size_t kVocabRows = 9;  // 8 words + padding
constexpr std::size_t kDim = 4;

EmbeddingTable toy_table(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0, 0.5);
  EmbeddingTable t(kDim);
  for (std::size_t w = 0; w + 1 < kVocabRows; ++w) {
    std::vector<double> v(kDim);
    for (auto& x : v) x = normal(rng);
    t.add("w" + std::to_string(w), v);
  }
  return t;
}

// Label 1 documents lean on words 4..7 (or TF-IDF columns in the upper half).
NeuralDataset toy_data(InputMode mode, std::size_t n, std::size_t dim, std::uint64_t seed, bool full_length = false) {
  Rng rng(seed);
  NeuralDataset d;
  d.mode = mode;
  d.tfidf = SparseMatrix(dim);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    d.labels.push_back(label);
    if (mode == InputMode::tfidf_vector) {
      std::vector<double> row(dim, 0.0);
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t half = dim / 2;
        const std::size_t col = (u(rng) < 0.8 ? label * half : (1 - label) * half) + rng() % half;
        row[col] += 0.2 + u(rng);
      }
      d.tfidf.append_dense_row(row);
    } else {
      IndexSequence s;
      const std::size_t len = full_length ? dim : 2 + rng() % (dim - 1);
      for (std::size_t t = 0; t < dim; ++t) {
        if (t < len) {
          const std::uint32_t base = u(rng) < 0.8 ? (label ? 5 : 1) : (label ? 1 : 5);
          s.indices.push_back(base + static_cast<std::uint32_t>(rng() % 4));
        } else {
          s.indices.push_back(kPaddingIndex);
        }
      }
      s.true_length = len;
      d.sequences.push_back(s);
    }
  }
  return d;
}

std::vector<ArchitectureSpec> toy_architectures(InputMode mode, std::size_t dim) {
  const std::size_t rows = mode == InputMode::embedding_sequence ? kVocabRows : 0;
  const std::size_t edim = mode == InputMode::embedding_sequence ? kDim : 0;
  return {build_dnn(mode, dim, {6, 5, 4, 3}, 0.25, rows, edim),
          build_cnn(mode, dim, {2, 3}, 3, 0.25, rows, edim),
          build_rnn(ModelKind::rnn_gru, mode, dim, 2, 3, 0.25, rows, edim),
          build_rnn(ModelKind::rnn_lstm, mode, dim, 2, 3, 0.25, rows, edim)};
}

double mean_loss(Network& net, const NeuralDataset& d) {
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), 0);
  nn::Graph g;
  Rng rng(0);
  return nn::softmax_sparse_ce(net.forward(g, make_batch(d, rows), nn::Mode::eval, rng), d.labels).value()[0];
}

}  // namespace

TEST_CASE("DNN construction") {
  auto tfidf = build_dnn(InputMode::tfidf_vector, 5000, {512, 256, 128, 64}, 0.25);
  CHECK(tfidf.layers.size() - 1 == 10);  // everything before the softmax head
  CHECK(tfidf.layers.back().kind == LayerKind::softmax);
  CHECK(tfidf.shapes()[0] == nn::Shape{5000});  // flatten is a no-op on a TF-IDF row
  CHECK(tfidf.parameter_count() == 5000 * 512 + 512 + 512 * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64 + 64 * 2 + 2);

  auto emb = build_dnn(InputMode::embedding_sequence, 128, {512, 256, 128, 64}, 0.25, 1001, 50);
  CHECK(emb.layers[0].kind == LayerKind::embedding);
  CHECK(emb.layers[1].kind == LayerKind::flatten);
  CHECK(emb.shapes()[1] == nn::Shape{6400});

  CHECK_THROWS_AS(build_dnn(InputMode::tfidf_vector, 10, {}, 0.25), ConfigError);
  CHECK_THROWS_AS(build_dnn(InputMode::tfidf_vector, 10, {4}, 1.0), ShapeError);
}

TEST_CASE("CNN construction") {
  auto cnn = build_cnn(InputMode::embedding_sequence, 128, {3, 4, 5, 6, 7, 8}, 64, 0.25, 101, 50);
  const auto shapes = cnn.shapes();
  std::size_t concat_at = 0;
  for (std::size_t i = 0; i < cnn.layers.size(); ++i)
    if (cnn.layers[i].kind == LayerKind::concat) concat_at = i;
  CHECK(shapes[concat_at] == nn::Shape{6 * 64});
  CHECK_THROWS_AS(build_cnn(InputMode::embedding_sequence, 5, {3, 6}, 4, 0.25, 10, 3), ShapeError);

  // TF-IDF rows become 100-wide chunks
  auto t = build_cnn(InputMode::tfidf_vector, 1234, {3, 4}, 8, 0.25);
  CHECK(t.layers[0].kind == LayerKind::reshape);
  CHECK(t.shapes()[0] == nn::Shape{13, 100});
}

TEST_CASE("CNN pooled output does not depend on where a constant sequence sits") {
  // Parameters do not depend on max_len, so two lengths share identical weights.
  auto long_spec = build_cnn(InputMode::embedding_sequence, 12, {2, 3}, 3, 0.25, kVocabRows, kDim);
  auto short_spec = build_cnn(InputMode::embedding_sequence, 5, {2, 3}, 3, 0.25, kVocabRows, kDim);
  auto table = toy_table(3);
  Network a(long_spec, 7, &table), b(short_spec, 7, &table);
  for (std::uint32_t token = 1; token < kVocabRows; ++token) {
    NeuralDataset da, db;
    da.mode = db.mode = InputMode::embedding_sequence;
    da.sequences.push_back({std::vector<std::uint32_t>(12, token), 12});
    db.sequences.push_back({std::vector<std::uint32_t>(5, token), 5});
    auto pa = a.predict_proba(da), pb = b.predict_proba(db);
    CHECK(pa[1] == doctest::Approx(pb[1]).epsilon(1e-12));
  }
}

TEST_CASE("RNN construction") {
  auto gru = build_rnn(ModelKind::rnn_gru, InputMode::embedding_sequence, 64, 4, 64, 0.25, 101, 50);
  auto lstm = build_rnn(ModelKind::rnn_lstm, InputMode::embedding_sequence, 64, 4, 64, 0.25, 101, 50);
  REQUIRE(gru.layers.size() == lstm.layers.size());
  std::size_t differing = 0;
  for (std::size_t i = 0; i < gru.layers.size(); ++i) {
    auto g = gru.layers[i], l = lstm.layers[i];
    if (g.kind == LayerKind::gru) {
      CHECK(l.kind == LayerKind::lstm);
      g.kind = l.kind;
      ++differing;
    }
    CHECK(g == l);
  }
  CHECK(differing == 4);
  std::size_t seq = 0;
  for (const auto& l : gru.layers) seq += l.return_sequence;
  CHECK(seq == 3);

  // zero recurrent weights and a zero head give logits of 0
  for (auto cell : {ModelKind::rnn_gru, ModelKind::rnn_lstm}) {
    auto spec = build_rnn(cell, InputMode::embedding_sequence, 6, 2, 3, 0.25, kVocabRows, kDim);
    Network net(spec, 1);
    for (auto* p : net.parameters())
      if (p->name.find(".embedding.") == std::string::npos) p->value.fill(0.0);
    auto p = net.predict_proba(toy_data(InputMode::embedding_sequence, 4, 6, 2));
    for (double v : p.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("gradient check on every built architecture") {
  for (auto mode : {InputMode::tfidf_vector, InputMode::embedding_sequence}) {
    const std::size_t dim = mode == InputMode::tfidf_vector ? 300 : 6;
    auto data = toy_data(mode, 3, dim, 5, true);
    auto table = toy_table(9);
    for (const auto& spec : toy_architectures(mode, dim)) {
      CAPTURE(infodemic::to_string(spec.family));
      CAPTURE(to_string(mode));
      Network net(spec, 11, mode == InputMode::embedding_sequence ? &table : nullptr);
      std::vector<std::size_t> rows{0, 1, 2};
      const Batch batch = make_batch(data, rows);
      Rng rng(0);
      auto loss = [&](nn::Graph& g) {
        return nn::softmax_sparse_ce(net.forward(g, batch, nn::Mode::eval, rng), data.labels);
      };
      auto params = net.parameters();
      auto report = nn::grad_check(params, loss, 1e-5, 1e-5);
      CHECK(report.max_relative_error < 1e-5);
      CHECK_FALSE(report.layers.empty());
    }
  }
}

TEST_CASE("training") {
  SUBCASE("two distinguishable documents are memorized") {
    for (auto mode : {InputMode::tfidf_vector, InputMode::embedding_sequence}) {
      const std::size_t dim = mode == InputMode::tfidf_vector ? 300 : 6;
      auto data = toy_data(mode, 2, dim, 21);
      auto table = toy_table(1);
      for (const auto& spec : toy_architectures(mode, dim)) {
        CAPTURE(infodemic::to_string(spec.family));
        TrainConfig cfg;
        cfg.epochs = 200;
        cfg.adam.learning_rate = 0.01;
        cfg.keep_best = false;
        cfg.seed = 3;
        auto r = train(spec, data, data, cfg, mode == InputMode::embedding_sequence ? &table : nullptr);
        CHECK(r.history.size() == 200);
        CHECK(r.history.back().validation_accuracy == 1.0);
      }
    }
  }
  SUBCASE("history length, determinism and CSV") {
    auto data = toy_data(InputMode::embedding_sequence, 20, 6, 4);
    auto table = toy_table(2);
    auto spec = toy_architectures(InputMode::embedding_sequence, 6)[2];
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 17;
    cfg.clip_norm = 5.0;
    auto a = train(spec, data, data, cfg, &table);
    auto b = train(spec, data, data, cfg, &table);
    REQUIRE(a.history.size() == 3);
    CHECK(a.history.back().train_loss == b.history.back().train_loss);
    CHECK(mean_loss(a.network, data) == mean_loss(b.network, data));
    CHECK(a.best_epoch >= 1);
    CHECK(a.best_epoch <= 3);
    const auto csv = history_csv(a.history);
    CHECK(csv.rfind("epoch,train_loss,train_acc,val_acc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  }
  SUBCASE("loss falls by 10% on a 32-sample subset for every architecture") {
    for (auto mode : {InputMode::tfidf_vector, InputMode::embedding_sequence}) {
      const std::size_t dim = mode == InputMode::tfidf_vector ? 300 : 8;
      auto data = toy_data(mode, 32, dim, 8);
      auto table = toy_table(6);
      for (const auto& spec : toy_architectures(mode, dim)) {
        CAPTURE(infodemic::to_string(spec.family));
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.batch_size = 8;
        cfg.adam.learning_rate = 0.01;
        cfg.seed = 5;
        auto r = train(spec, data, data, cfg, mode == InputMode::embedding_sequence ? &table : nullptr);
        CHECK(r.history[r.best_epoch - 1].train_loss <= 0.9 * r.history[0].train_loss);
      }
    }
  }
  SUBCASE("divergence is reported with epoch and batch") {
    auto data = toy_data(InputMode::tfidf_vector, 8, 300, 1);
    TrainConfig cfg;
    cfg.abort_loss = 1e-6;
    try {
      train(toy_architectures(InputMode::tfidf_vector, 300)[0], data, data, cfg);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.epoch() == 1);
      CHECK(e.batch() == 0);
      CHECK(std::string(e.what()).find("epoch 1, batch 0") != std::string::npos);
    }
  }
  SUBCASE("configuration checks") {
    auto data = toy_data(InputMode::tfidf_vector, 4, 300, 1);
    auto spec = toy_architectures(InputMode::tfidf_vector, 300)[0];
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(spec, data, data, cfg), ConfigError);
    cfg.epochs = 1;
    cfg.precision = Precision::f32;
    CHECK_THROWS_AS(train(spec, data, data, cfg), ConfigError);
    cfg.precision = Precision::f64;
    auto seq = toy_data(InputMode::embedding_sequence, 4, 6, 1);
    CHECK_THROWS_AS(train(spec, seq, seq, cfg), ConfigError);
  }
}

TEST_CASE("prediction") {
  auto table = toy_table(4);
  for (auto mode : {InputMode::tfidf_vector, InputMode::embedding_sequence}) {
    const std::size_t dim = mode == InputMode::tfidf_vector ? 300 : 8;
    auto data = toy_data(mode, 13, dim, 12);
    for (const auto& spec : toy_architectures(mode, dim)) {
      CAPTURE(infodemic::to_string(spec.family));
      Network net(spec, 2, mode == InputMode::embedding_sequence ? &table : nullptr);
      auto whole = net.predict_proba(data, 256);
      auto again = net.predict_proba(data, 256);
      CHECK(whole.data == again.data);
      auto single = net.predict_proba(data, 1);
      auto odd = net.predict_proba(data, 5);
      for (std::size_t i = 0; i < whole.size(); ++i) {
        CHECK(std::abs(whole[i] - single[i]) < 1e-6);
        CHECK(std::abs(whole[i] - odd[i]) < 1e-6);
      }
      auto pred = net.predict(data);
      for (std::size_t r = 0; r < data.size(); ++r) {
        CHECK(pred.scores[r][0] + pred.scores[r][1] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(pred.labels[r] == (pred.scores[r][1] > pred.scores[r][0] ? 1 : 0));
      }
    }
  }
}

TEST_CASE("persistence") {
  auto table = toy_table(5);
  auto spec = toy_architectures(InputMode::embedding_sequence, 8)[1];
  Network net(spec, 9, &table);
  auto c = decode_container(encode_container(net.to_container(101, 202)));
  CHECK(ArchitectureSpec::from_json(c.architecture) == spec);
  for (const auto& t : c.tensors) CHECK(t.dtype == DType::f32);
  auto back = load_network(c, 101, 202);
  auto data = toy_data(InputMode::embedding_sequence, 6, 8, 3);
  auto a = net.predict_proba(data), b = back.predict_proba(data);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-5);
  CHECK_THROWS_WITH_AS(load_network(c, 100, 202), doctest::Contains("vocabulary"), Error);
  CHECK_THROWS_WITH_AS(load_network(c, 101, 0), doctest::Contains("preprocessing"), Error);
}

TEST_CASE("default architectures") {
  auto d = NeuralDefaults::reduced();
  CHECK(sequence_length(ModelKind::rnn_gru, d) == 64);
  CHECK(sequence_length(ModelKind::cnn, d) == 128);
  CHECK(sequence_length(ModelKind::rnn_lstm, NeuralDefaults::paper_scale()) == 128);
  auto rnn = default_architecture(ModelKind::rnn_lstm, FeatureKind::tfidf, d, 2500, 0, 0);
  CHECK(rnn.layers[0].kind == LayerKind::reshape);
  CHECK(rnn.shapes()[0] == nn::Shape{25, 100});
  auto cnn = default_architecture(ModelKind::cnn, FeatureKind::embedding, d, 0, 501, 50);
  CHECK(cnn.input_dim == 128);
  // 640 terms are 7 chunks, narrower than the widest default kernel
  auto narrow = default_architecture(ModelKind::cnn, FeatureKind::tfidf, d, 640, 0, 0);
  std::size_t widest = 0;
  for (const auto& l : narrow.layers)
    if (l.kind == LayerKind::conv1d) widest = std::max(widest, l.width);
  CHECK(widest == 7);
  CHECK_NOTHROW(narrow.shapes());
  CHECK_THROWS_AS(default_architecture(ModelKind::knn, FeatureKind::tfidf, d, 10, 0, 0), ConfigError);
}
