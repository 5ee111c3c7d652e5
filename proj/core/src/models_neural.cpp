#include "infodemic/models_neural.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include <json.hpp>

#include "infodemic/corpus.hpp"

namespace infodemic::neural {
namespace {

using nn::Graph;
using nn::NdArray;
using nn::Parameter;
using nn::Shape;
using nn::Tensor;
using Json = nlohmann::json;

constexpr std::array<std::pair<LayerKind, const char*>, 11> kLayerNames = {{
    {LayerKind::embedding, "embedding"},
    {LayerKind::reshape, "reshape"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::dense, "dense"},
    {LayerKind::dropout, "dropout"},
    {LayerKind::conv1d, "conv1d"},
    {LayerKind::avgpool1d, "avgpool1d"},
    {LayerKind::gru, "gru"},
    {LayerKind::lstm, "lstm"},
    {LayerKind::concat, "concat"},
    {LayerKind::softmax, "softmax"},
}};

std::size_t gates(LayerKind k) { return k == LayerKind::gru ? 3 : 4; }

std::size_t chunks(std::size_t dim, std::size_t chunk) { return (dim + chunk - 1) / chunk; }

std::string layer_label(std::size_t i, const LayerSpec& l) { return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")"; }

NdArray uniform(Shape shape, double limit, Rng& rng) {
  NdArray a(std::move(shape));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& v : a.data) v = u(rng);
  return a;
}

std::vector<LayerSpec> input_stage(InputMode input, std::size_t input_dim, std::size_t embed_rows, std::size_t embed_dim,
                                   bool sequence_model) {
  std::vector<LayerSpec> layers;
  if (input == InputMode::embedding_sequence) {
    if (embed_rows < 2 || embed_dim == 0) throw ConfigError("embedding input needs a non-empty embedding table");
    LayerSpec e;
    e.kind = LayerKind::embedding;
    e.rows = embed_rows;
    e.units = embed_dim;
    layers.push_back(e);
  } else if (sequence_model) {
    LayerSpec r;
    r.kind = LayerKind::reshape;
    r.width = std::min(kTfidfChunk, input_dim);
    layers.push_back(r);
  }
  return layers;
}

void append_head(std::vector<LayerSpec>& layers) {
  LayerSpec out;
  out.kind = LayerKind::dense;
  out.units = 2;
  layers.push_back(out);
  LayerSpec sm;
  sm.kind = LayerKind::softmax;
  layers.push_back(sm);
}

LayerSpec dropout_layer(double rate, int branch = -1) {
  LayerSpec d;
  d.kind = LayerKind::dropout;
  d.rate = rate;
  d.branch = branch;
  return d;
}

}  // namespace

std::string to_string(LayerKind kind) {
  for (const auto& [k, name] : kLayerNames)
    if (k == kind) return name;
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kLayerNames)
    if (name == n) return k;
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

std::string to_string(InputMode mode) {
  return mode == InputMode::tfidf_vector ? "tfidf_vector" : "embedding_sequence";
}

// ---------------------------------------------------------------- spec

std::vector<Shape> ArchitectureSpec::shapes() const { return layer_shapes(nullptr); }

std::vector<Shape> ArchitectureSpec::layer_shapes(std::vector<Shape>* inputs) const {
  if (input_dim == 0) throw ShapeError("architecture input dimension is 0");
  if (layers.size() < 2 || layers.back().kind != LayerKind::softmax || layers[layers.size() - 2].kind != LayerKind::dense ||
      layers[layers.size() - 2].units != 2)
    throw ShapeError("architecture must end with dense(2) and softmax");
  Shape cur{input_dim};
  bool indices = input == InputMode::embedding_sequence;
  std::map<int, Shape> branches;
  std::vector<Shape> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto where = layer_label(i, l);
    if (l.kind == LayerKind::softmax && i + 1 != layers.size()) throw ShapeError(where + ": softmax must be last");
    if (l.branch >= 0 && (l.kind == LayerKind::concat || l.kind == LayerKind::embedding))
      throw ShapeError(where + " cannot sit inside a branch");
    if (l.branch >= 0 && !branches.count(l.branch)) branches[l.branch] = cur;
    Shape& s = l.branch >= 0 ? branches[l.branch] : cur;
    if (inputs) inputs->push_back(s);
    if (indices && l.kind != LayerKind::embedding) throw ShapeError(where + ": token indices must go through an embedding first");
    switch (l.kind) {
      case LayerKind::embedding:
        if (!indices || i != 0) throw ShapeError(where + ": embedding must be the first layer of a sequence model");
        if (l.rows < 2 || l.units == 0) throw ShapeError(where + ": empty embedding table");
        s = {s[0], l.units};
        indices = false;
        break;
      case LayerKind::reshape:
        if (s.size() != 1 || l.width == 0) throw ShapeError(where + ": reshape needs a flat input and a chunk size");
        s = {chunks(s[0], l.width), l.width};
        break;
      case LayerKind::flatten:
        s = {nn::element_count(s)};
        break;
      case LayerKind::dense:
        if (s.size() != 1) throw ShapeError(where + ": dense needs a flat input, got " + nn::to_string(s));
        if (l.units == 0) throw ShapeError(where + ": dense needs at least one unit");
        s = {l.units};
        break;
      case LayerKind::dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ShapeError(where + ": dropout rate must be in [0, 1)");
        break;
      case LayerKind::conv1d:
        if (s.size() != 2) throw ShapeError(where + ": conv1d needs [time, channels]");
        if (l.width == 0 || l.units == 0) throw ShapeError(where + ": conv1d needs a width and filters");
        if (l.width > s[0])
          throw ShapeError(where + ": kernel width " + std::to_string(l.width) + " exceeds sequence length " +
                           std::to_string(s[0]));
        s = {s[0] - l.width + 1, l.units};
        break;
      case LayerKind::avgpool1d:
        if (s.size() != 2) throw ShapeError(where + ": pooling needs [time, channels]");
        if (l.width == 0)
          s = {s[1]};
        else if (l.width > s[0])
          throw ShapeError(where + ": pooling window exceeds sequence length");
        else
          s = {s[0] / l.width, s[1]};
        break;
      case LayerKind::gru:
      case LayerKind::lstm:
        if (s.size() != 2) throw ShapeError(where + ": recurrent layer needs [time, features]");
        if (l.units == 0) throw ShapeError(where + ": hidden size must be at least 1");
        s = l.return_sequence ? Shape{s[0], l.units} : Shape{l.units};
        break;
      case LayerKind::concat: {
        if (branches.empty()) throw ShapeError(where + ": concat without branches");
        std::size_t width = 0;
        for (auto& [b, bs] : branches) {
          if (bs.size() != 1) throw ShapeError(where + ": branch " + std::to_string(b) + " is not flat");
          width += bs[0];
        }
        branches.clear();
        cur = {width};
        break;
      }
      case LayerKind::softmax:
        break;
    }
    out.push_back(s);
  }
  if (!branches.empty()) throw ShapeError("architecture leaves branches unjoined");
  return out;
}

std::size_t ArchitectureSpec::parameter_count() const {
  std::vector<Shape> in;
  layer_shapes(&in);
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::embedding: total += l.rows * l.units; break;
      case LayerKind::dense: total += in[i].back() * l.units + l.units; break;
      case LayerKind::conv1d: total += l.width * in[i][1] * l.units + l.units; break;
      case LayerKind::gru:
      case LayerKind::lstm: total += gates(l.kind) * l.units * (in[i][1] + l.units + 1); break;
      default: break;
    }
  }
  return total;
}

std::string ArchitectureSpec::to_json() const {
  Json layers_json = Json::array();
  for (const auto& l : layers) {
    Json j{{"kind", to_string(l.kind)}};
    if (l.units) j["units"] = l.units;
    if (l.width || l.kind == LayerKind::avgpool1d) j["width"] = l.width;
    if (l.rows) j["rows"] = l.rows;
    if (l.kind == LayerKind::dropout) j["rate"] = l.rate;
    if (l.relu) j["relu"] = true;
    if (l.return_sequence) j["return_sequence"] = true;
    if (!l.trainable) j["trainable"] = false;
    if (l.branch >= 0) j["branch"] = l.branch;
    layers_json.push_back(j);
  }
  Json j{{"family", infodemic::to_string(family)},
         {"input", to_string(input)},
         {"input_dim", input_dim},
         {"layers", layers_json}};
  return j.dump();
}

ArchitectureSpec ArchitectureSpec::from_json(std::string_view text) {
  try {
    const Json j = Json::parse(text);
    ArchitectureSpec s;
    s.family = parse_model_kind(j.at("family").get<std::string>());
    const auto input = j.at("input").get<std::string>();
    if (input == "tfidf_vector")
      s.input = InputMode::tfidf_vector;
    else if (input == "embedding_sequence")
      s.input = InputMode::embedding_sequence;
    else
      throw ConfigError("unknown input mode '" + input + "'");
    s.input_dim = j.at("input_dim").get<std::size_t>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = parse_layer_kind(lj.at("kind").get<std::string>());
      l.units = lj.value("units", std::size_t{0});
      l.width = lj.value("width", std::size_t{0});
      l.rows = lj.value("rows", std::size_t{0});
      l.rate = lj.value("rate", 0.0);
      l.relu = lj.value("relu", false);
      l.return_sequence = lj.value("return_sequence", false);
      l.trainable = lj.value("trainable", true);
      l.branch = lj.value("branch", -1);
      s.layers.push_back(l);
    }
    s.shapes();
    return s;
  } catch (const Json::exception& e) {
    throw Error(std::string("architecture JSON is malformed: ") + e.what());
  }
}

ArchitectureSpec build_dnn(InputMode input, std::size_t input_dim, const std::vector<std::size_t>& widths, double dropout,
                           std::size_t embed_rows, std::size_t embed_dim) {
  if (widths.empty()) throw ConfigError("a DNN needs at least one hidden layer");
  ArchitectureSpec s;
  s.family = ModelKind::dnn;
  s.input = input;
  s.input_dim = input_dim;
  s.layers = input_stage(input, input_dim, embed_rows, embed_dim, false);
  LayerSpec flat;
  flat.kind = LayerKind::flatten;
  s.layers.push_back(flat);
  for (auto w : widths) {
    LayerSpec d;
    d.kind = LayerKind::dense;
    d.units = w;
    d.relu = true;
    s.layers.push_back(d);
    s.layers.push_back(dropout_layer(dropout));
  }
  append_head(s.layers);
  s.shapes();
  return s;
}

ArchitectureSpec build_cnn(InputMode input, std::size_t input_dim, const std::vector<std::size_t>& kernel_widths,
                           std::size_t filters, double dropout, std::size_t embed_rows, std::size_t embed_dim) {
  if (kernel_widths.empty()) throw ConfigError("a CNN needs at least one convolution branch");
  ArchitectureSpec s;
  s.family = ModelKind::cnn;
  s.input = input;
  s.input_dim = input_dim;
  s.layers = input_stage(input, input_dim, embed_rows, embed_dim, true);
  for (std::size_t b = 0; b < kernel_widths.size(); ++b) {
    LayerSpec conv;
    conv.kind = LayerKind::conv1d;
    conv.width = kernel_widths[b];
    conv.units = filters;
    conv.branch = static_cast<int>(b);
    s.layers.push_back(conv);
    LayerSpec pool;
    pool.kind = LayerKind::avgpool1d;
    pool.width = 0;
    pool.branch = static_cast<int>(b);
    s.layers.push_back(pool);
  }
  LayerSpec cat;
  cat.kind = LayerKind::concat;
  s.layers.push_back(cat);
  s.layers.push_back(dropout_layer(dropout));
  append_head(s.layers);
  s.shapes();
  return s;
}

ArchitectureSpec build_rnn(ModelKind cell, InputMode input, std::size_t input_dim, std::size_t layers, std::size_t hidden,
                           double dropout, std::size_t embed_rows, std::size_t embed_dim) {
  if (cell != ModelKind::rnn_gru && cell != ModelKind::rnn_lstm) throw ConfigError("recurrent cell must be gru or lstm");
  if (layers == 0) throw ConfigError("an RNN needs at least one recurrent layer");
  if (hidden == 0) throw ConfigError("hidden size must be at least 1");
  ArchitectureSpec s;
  s.family = cell;
  s.input = input;
  s.input_dim = input_dim;
  s.layers = input_stage(input, input_dim, embed_rows, embed_dim, true);
  for (std::size_t i = 0; i < layers; ++i) {
    LayerSpec r;
    r.kind = cell == ModelKind::rnn_gru ? LayerKind::gru : LayerKind::lstm;
    r.units = hidden;
    r.return_sequence = i + 1 < layers;
    s.layers.push_back(r);
    s.layers.push_back(dropout_layer(dropout));
  }
  append_head(s.layers);
  s.shapes();
  return s;
}

// ---------------------------------------------------------------- data

Batch make_batch(const NeuralDataset& data, std::span<const std::size_t> rows) {
  Batch b;
  b.mode = data.mode;
  b.size = rows.size();
  if (data.mode == InputMode::tfidf_vector) {
    b.tfidf = data.tfidf.select_rows(rows);
  } else {
    b.time = data.sequences.empty() ? 0 : data.sequences[0].indices.size();
    for (auto r : rows) {
      const auto& s = data.sequences.at(r);
      if (s.indices.size() != b.time) throw ShapeError("sequences in a dataset must share one length");
      b.indices.insert(b.indices.end(), s.indices.begin(), s.indices.end());
      b.lengths.push_back(s.true_length);
    }
  }
  return b;
}

// ---------------------------------------------------------------- network

Network::Network(ArchitectureSpec spec, std::uint64_t seed, const EmbeddingTable* pretrained) : spec_(std::move(spec)) {
  std::vector<Shape> inputs;
  spec_.layer_shapes(&inputs);
  layers_.resize(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    const Shape& in = inputs[i];
    Rng rng(derive_seed(seed, i));
    auto& ps = layers_[i].params;
    const std::string p = "layer" + std::to_string(i) + "." + to_string(l.kind) + ".";
    auto add = [&](const std::string& name, NdArray v) {
      ps.push_back(std::make_unique<Parameter>(p + name, std::move(v)));
    };
    switch (l.kind) {
      case LayerKind::embedding: {
        NdArray table({l.rows, l.units});
        if (pretrained) {
          if (pretrained->dim() != l.units || pretrained->size() + 1 != l.rows)
            throw ShapeError("pretrained table " + std::to_string(pretrained->size()) + "x" +
                             std::to_string(pretrained->dim()) + " does not fit embedding layer " +
                             std::to_string(l.rows - 1) + "x" + std::to_string(l.units));
          for (std::size_t r = 0; r < pretrained->size(); ++r) {
            auto v = pretrained->row(r);
            std::copy(v.begin(), v.end(), table.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * l.units));
          }
        } else {
          std::uniform_real_distribution<double> u(-0.05, 0.05);
          for (std::size_t k = l.units; k < table.size(); ++k) table[k] = u(rng);
        }
        add("table", std::move(table));
        break;
      }
      case LayerKind::dense: {
        const std::size_t fan_in = in.back();
        // He-uniform for ReLU layers, LeCun-uniform for the linear head
        const double limit = std::sqrt((l.relu ? 6.0 : 3.0) / static_cast<double>(fan_in));
        add("w", uniform({fan_in, l.units}, limit, rng));
        add("b", NdArray({l.units}));
        break;
      }
      case LayerKind::conv1d: {
        const std::size_t fan_in = l.width * in[1];
        add("w", uniform({l.width, in[1], l.units}, std::sqrt(6.0 / static_cast<double>(fan_in)), rng));
        add("b", NdArray({l.units}));
        break;
      }
      case LayerKind::gru:
      case LayerKind::lstm: {
        const std::size_t g = gates(l.kind) * l.units;
        const double limit = 1.0 / std::sqrt(static_cast<double>(l.units));
        add("wx", uniform({in[1], g}, limit, rng));
        add("wh", uniform({l.units, g}, limit, rng));
        NdArray b({g});
        if (l.kind == LayerKind::lstm)  // forget gate starts open
          for (std::size_t k = l.units; k < 2 * l.units; ++k) b[k] = 1.0;
        add("b", std::move(b));
        break;
      }
      default:
        break;
    }
  }
}

Network::Network(const Network& other) : spec_(other.spec_) {
  layers_.resize(other.layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (const auto& p : other.layers_[i].params) layers_[i].params.push_back(std::make_unique<Parameter>(*p));
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (auto& p : l.params) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& l : layers_)
    for (const auto& p : l.params) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> Network::trainable() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (spec_.layers[i].trainable)
      for (auto& p : layers_[i].params) out.push_back(p.get());
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

Tensor Network::forward(Graph& g, const Batch& batch, nn::Mode mode, Rng& rng) {
  if (batch.mode != spec_.input) throw ShapeError("batch input mode does not match the architecture");
  if (batch.size == 0) throw ShapeError("empty batch");
  // TF-IDF rows stay sparse until the first layer that needs them dense.
  bool sparse_pending = spec_.input == InputMode::tfidf_vector;
  if (sparse_pending && batch.tfidf.cols() != spec_.input_dim)
    throw ShapeError("TF-IDF input has " + std::to_string(batch.tfidf.cols()) + " columns, model expects " +
                     std::to_string(spec_.input_dim));
  if (!sparse_pending && batch.time != spec_.input_dim)
    throw ShapeError("sequence length " + std::to_string(batch.time) + " does not match model max_len " +
                     std::to_string(spec_.input_dim));
  std::span<const std::size_t> lengths;
  Tensor cur;
  std::map<int, Tensor> branches;

  auto densify = [&](std::size_t chunk) {
    const std::size_t steps = chunks(spec_.input_dim, chunk);
    NdArray x({batch.size, steps, chunk});
    for (std::size_t r = 0; r < batch.size; ++r)
      for (const auto& e : batch.tfidf.row(r)) x[r * steps * chunk + e.index] = e.weight;
    return g.input(std::move(x));
  };

  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    auto& ps = layers_[i].params;
    if (l.branch >= 0 && !branches.count(l.branch)) {
      if (sparse_pending) throw ShapeError("branches need a dense input stage");
      branches[l.branch] = cur;
    }
    Tensor& t = l.branch >= 0 ? branches[l.branch] : cur;
    switch (l.kind) {
      case LayerKind::embedding:
        t = nn::embedding(batch.indices, batch.size, batch.time, g.parameter(*ps[0]));
        lengths = batch.lengths;
        break;
      case LayerKind::reshape:
        if (sparse_pending) {
          t = densify(l.width);
          sparse_pending = false;
        } else {
          t = nn::reshape(t, {batch.size, chunks(t.dim(1), l.width), l.width});
        }
        break;
      case LayerKind::flatten:
        if (!sparse_pending) t = nn::flatten(t);
        break;
      case LayerKind::dense: {
        const auto act = l.relu ? nn::Activation::relu : nn::Activation::none;
        if (sparse_pending) {
          t = nn::sparse_dense(batch.tfidf, g.parameter(*ps[0]), g.parameter(*ps[1]), act);
          sparse_pending = false;
        } else {
          t = nn::dense(t, g.parameter(*ps[0]), g.parameter(*ps[1]), act);
        }
        break;
      }
      case LayerKind::dropout:
        if (sparse_pending) throw ShapeError("dropout directly on sparse input is not supported");
        t = nn::dropout(t, l.rate, mode, rng);
        break;
      case LayerKind::conv1d:
        t = nn::conv1d(t, g.parameter(*ps[0]), g.parameter(*ps[1]));
        break;
      case LayerKind::avgpool1d:
        t = l.width == 0 ? nn::global_avgpool1d(t) : nn::avgpool1d(t, l.width);
        break;
      case LayerKind::gru:
      case LayerKind::lstm: {
        nn::RecurrentWeights w{g.parameter(*ps[0]), g.parameter(*ps[1]), g.parameter(*ps[2])};
        t = l.kind == LayerKind::gru ? nn::gru(t, w, lengths, l.return_sequence)
                                     : nn::lstm(t, w, lengths, l.return_sequence);
        break;
      }
      case LayerKind::concat: {
        std::vector<Tensor> parts;
        for (auto& [b, bt] : branches) parts.push_back(bt);
        cur = nn::concat(parts);
        branches.clear();
        break;
      }
      case LayerKind::softmax:
        break;  // folded into the loss; predict_proba applies it
    }
  }
  return cur;
}

NdArray Network::predict_proba(const NeuralDataset& data, std::size_t batch_size) {
  const std::size_t n = data.size();
  NdArray out({n, 2});
  Rng unused(0);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    rows.clear();
    for (std::size_t r = start; r < std::min(n, start + batch_size); ++r) rows.push_back(r);
    const Batch b = make_batch(data, rows);
    Graph g;
    const NdArray p = nn::softmax(forward(g, b, nn::Mode::eval, unused).value());
    std::copy(p.data.begin(), p.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * 2));
  }
  return out;
}

Prediction Network::predict(const NeuralDataset& data, std::size_t batch_size) {
  const NdArray p = predict_proba(data, batch_size);
  Prediction out;
  for (std::size_t r = 0; r < data.size(); ++r) {
    out.scores.push_back({p[2 * r], p[2 * r + 1]});
    out.labels.push_back(p[2 * r + 1] > p[2 * r] ? kReal : kFake);
  }
  return out;
}

ModelContainer Network::to_container(std::uint64_t vocabulary_hash, std::uint64_t pipeline_hash) const {
  ModelContainer c;
  c.architecture = spec_.to_json();
  c.vocabulary_hash = vocabulary_hash;
  c.pipeline_hash = pipeline_hash;
  for (const auto* p : parameters()) c.tensors.push_back({p->name, DType::f32, p->value.shape, p->value.data});
  return c;
}

Network Network::from_container(const ModelContainer& container) {
  Network net(ArchitectureSpec::from_json(container.architecture), 0);
  for (auto* p : net.parameters()) {
    const auto& t = container.tensor(p->name);
    if (t.shape != p->value.shape)
      throw ShapeError("stored tensor '" + p->name + "' has shape " + nn::to_string(t.shape) + ", expected " +
                       nn::to_string(p->value.shape));
    p->value.data = t.values;
  }
  return net;
}

Network load_network(const ModelContainer& container, std::uint64_t vocabulary_hash, std::uint64_t pipeline_hash) {
  verify_container_hashes(container, vocabulary_hash, pipeline_hash);
  return Network::from_container(container);
}

// ---------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(adam.learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (precision == Precision::f32)
    throw ConfigError("float32 training is not available; the engine computes in float64");
  if (clip_norm < 0) throw ConfigError("clip norm must be non-negative");
}

TrainResult train(const ArchitectureSpec& spec, const NeuralDataset& train_data, const NeuralDataset& validation,
                  const TrainConfig& config, const EmbeddingTable* pretrained) {
  config.validate();
  if (train_data.mode != spec.input || validation.mode != spec.input)
    throw ConfigError("dataset featurization (" + to_string(train_data.mode) + ") does not match the architecture input (" +
                      to_string(spec.input) + ")");
  const std::size_t n = train_data.size();
  if (n == 0) throw Error("cannot train on an empty split");
  if (train_data.labels.size() != n || validation.labels.size() != validation.size())
    throw ShapeError("one label per document required");

  const auto start = std::chrono::steady_clock::now();
  TrainResult result{Network(spec, derive_seed(config.seed, 1), pretrained), {}, 0, 0.0};
  Network& net = result.network;
  auto params = net.trainable();
  nn::AdamState adam(config.adam);
  Rng shuffle_rng(derive_seed(config.seed, 2));
  Rng dropout_rng(derive_seed(config.seed, 3));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::optional<Network> best;
  double best_acc = -1.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0, batch_index = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size, ++batch_index) {
      const std::span<const std::size_t> rows(order.data() + b0, std::min(config.batch_size, n - b0));
      const Batch batch = make_batch(train_data, rows);
      std::vector<int> labels;
      for (auto r : rows) labels.push_back(train_data.labels[r]);
      nn::zero_grads(params);
      double loss = 0.0;
      try {
        Graph g;
        Tensor logits = net.forward(g, batch, nn::Mode::train, dropout_rng);
        Tensor l = nn::softmax_sparse_ce(logits, labels);
        loss = l.value()[0];
        if (loss > config.abort_loss)
          throw DivergenceError(epoch, batch_index, "loss " + std::to_string(loss) + " exceeds the abort threshold");
        g.backward(l);
        const auto& lv = logits.value();
        for (std::size_t r = 0; r < rows.size(); ++r)
          correct += (lv[2 * r + 1] > lv[2 * r] ? kReal : kFake) == labels[r];
        if (config.clip_norm > 0) nn::clip_grad_norm(params, config.clip_norm);
        adam.apply(params);
      } catch (const DivergenceError&) {
        throw;
      } catch (const NonFiniteError& e) {
        throw DivergenceError(epoch, batch_index, e.what());
      }
      loss_sum += loss * static_cast<double>(rows.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (validation.size() > 0) {
      const auto pred = net.predict(validation);
      std::size_t ok = 0;
      for (std::size_t r = 0; r < validation.size(); ++r) ok += pred.labels[r] == validation.labels[r];
      rec.validation_accuracy = static_cast<double>(ok) / static_cast<double>(validation.size());
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.history.push_back(rec);
    if (rec.validation_accuracy > best_acc) {
      best_acc = rec.validation_accuracy;
      result.best_epoch = epoch;
      if (config.keep_best) best = net;
    }
  }
  if (config.keep_best)
    net = std::move(*best);
  else
    result.best_epoch = config.epochs;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,train_acc,val_acc\n";
  char buf[128];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", h.epoch, h.train_loss, h.train_accuracy,
                  h.validation_accuracy);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------- defaults

NeuralDefaults NeuralDefaults::reduced() { return NeuralDefaults{}; }

NeuralDefaults NeuralDefaults::paper_scale() {
  NeuralDefaults d;
  d.rnn_max_len = d.max_len;
  return d;
}

std::size_t sequence_length(ModelKind family, const NeuralDefaults& defaults) {
  return family == ModelKind::rnn_gru || family == ModelKind::rnn_lstm ? defaults.rnn_max_len : defaults.max_len;
}

ArchitectureSpec default_architecture(ModelKind family, FeatureKind features, const NeuralDefaults& d,
                                      std::size_t tfidf_dim, std::size_t embed_rows, std::size_t embed_dim) {
  const InputMode input = features == FeatureKind::tfidf ? InputMode::tfidf_vector : InputMode::embedding_sequence;
  const std::size_t dim = features == FeatureKind::tfidf ? tfidf_dim : sequence_length(family, d);
  switch (family) {
    case ModelKind::dnn: return build_dnn(input, dim, d.dnn_widths, d.dropout, embed_rows, embed_dim);
    case ModelKind::cnn: {
      // a small vocabulary gives few chunks; narrow the widest kernels to fit
      const std::size_t steps =
          input == InputMode::tfidf_vector ? (dim + kTfidfChunk - 1) / std::min(kTfidfChunk, std::max<std::size_t>(dim, 1)) : dim;
      auto kernels = d.cnn_kernel_widths;
      for (auto& k : kernels) k = std::min(k, std::max<std::size_t>(steps, 1));
      return build_cnn(input, dim, kernels, d.cnn_filters, d.dropout, embed_rows, embed_dim);
    }
    case ModelKind::rnn_gru:
    case ModelKind::rnn_lstm:
      return build_rnn(family, input, dim, d.rnn_layers, d.rnn_hidden, d.dropout, embed_rows, embed_dim);
    default: throw ConfigError(infodemic::to_string(family) + " is not a neural architecture");
  }
}

}  // namespace infodemic::neural
