#include <benchmark/benchmark.h>

#include <numeric>

#include "infodemic/corpus.hpp"
#include "infodemic/features.hpp"
#include "infodemic/models_classic.hpp"
#include "infodemic/models_neural.hpp"
#include "infodemic/nn/ops.hpp"
#include "infodemic/preprocess.hpp"
#include "infodemic/rmdl.hpp"

using namespace infodemic;

namespace {

std::vector<TokenSequence> synthetic_tokens(std::size_t n) {
  auto cfg = synthetic_config_for(n, 7);
  const auto corpus = generate_synthetic_corpus(cfg);
  std::vector<TokenSequence> docs;
  for (const auto& d : corpus.train.documents) docs.push_back(pipeline(d.text));
  return docs;
}

std::vector<int> synthetic_labels(std::size_t n) {
  const auto corpus = generate_synthetic_corpus(synthetic_config_for(n, 7));
  std::vector<int> y;
  for (const auto& d : corpus.train.documents) y.push_back(d.label);
  return y;
}

void BM_TfidfTransform(benchmark::State& state) {
  const auto docs = synthetic_tokens(static_cast<std::size_t>(state.range(0)));
  const auto vocab = Vocabulary::build(docs);
  for (auto _ : state)
    for (const auto& d : docs) benchmark::DoNotOptimize(tfidf_vector(d, vocab));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(docs.size()));
}
BENCHMARK(BM_TfidfTransform)->Arg(500)->Arg(2000);

void BM_TreeFit(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto docs = synthetic_tokens(n);
  const auto vocab = Vocabulary::build(docs);
  SparseMatrix x(vocab.size());
  for (const auto& d : docs) x.append_row(tfidf_vector(d, vocab));
  const auto y = synthetic_labels(n);
  ClassicHyperparameters hp;
  hp.rf_trees = 1;
  for (auto _ : state) {
    auto model = make_classifier(ModelKind::random_forest, FeatureKind::tfidf, hp);
    benchmark::DoNotOptimize(model->fit(x, y, 3));
  }
}
BENCHMARK(BM_TreeFit)->Arg(500)->Unit(benchmark::kMillisecond);

neural::NeuralDataset random_sequences(std::size_t n, std::size_t len, std::size_t rows) {
  Rng rng(11);
  neural::NeuralDataset d;
  d.mode = neural::InputMode::embedding_sequence;
  for (std::size_t i = 0; i < n; ++i) {
    IndexSequence s;
    for (std::size_t t = 0; t < len; ++t) s.indices.push_back(1 + static_cast<std::uint32_t>(rng() % (rows - 1)));
    s.true_length = len;
    d.sequences.push_back(std::move(s));
    d.labels.push_back(static_cast<int>(i % 2));
  }
  return d;
}

void forward_backward(benchmark::State& state, const neural::ArchitectureSpec& spec,
                      const neural::NeuralDataset& data) {
  neural::Network net(spec, 5);
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  const auto batch = neural::make_batch(data, rows);
  Rng rng(1);
  for (auto _ : state) {
    nn::Graph g;
    auto logits = net.forward(g, batch, nn::Mode::train, rng);
    auto loss = nn::softmax_sparse_ce(logits, data.labels);
    g.backward(loss);
    for (auto* p : net.parameters()) p->zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}

void BM_DenseForwardBackward(benchmark::State& state) {
  const auto data = random_sequences(64, 128, 2001);
  forward_backward(state, neural::build_dnn(neural::InputMode::embedding_sequence, 128, {256, 128}, 0.25, 2001, 50),
                   data);
}
BENCHMARK(BM_DenseForwardBackward)->Unit(benchmark::kMillisecond);

void BM_RecurrentForwardBackward(benchmark::State& state) {
  const auto kind = state.range(0) == 0 ? ModelKind::rnn_gru : ModelKind::rnn_lstm;
  const auto data = random_sequences(64, 64, 2001);
  forward_backward(state, neural::build_rnn(kind, neural::InputMode::embedding_sequence, 64, 1, 64, 0.25, 2001, 50),
                   data);
  state.SetLabel(kind == ModelKind::rnn_gru ? "gru" : "lstm");
}
BENCHMARK(BM_RecurrentForwardBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Vote(benchmark::State& state) {
  const std::size_t members = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<std::vector<int>> preds(members, std::vector<int>(2140));
  for (auto& p : preds)
    for (auto& v : p) v = static_cast<int>(rng() % 2);
  for (auto _ : state) benchmark::DoNotOptimize(rmdl::vote(preds));
}
BENCHMARK(BM_Vote)->Arg(3)->Arg(9)->Arg(27);

}  // namespace
BENCHMARK_MAIN();
