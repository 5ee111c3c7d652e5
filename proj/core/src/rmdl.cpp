#include "infodemic/rmdl.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace infodemic::rmdl {

using neural::ArchitectureSpec;
using neural::InputMode;
using neural::LayerKind;
using Json = nlohmann::json;

namespace {

const FamilyRange& range_for(const EnsembleConfig& c, ModelKind family) {
  if (family == ModelKind::dnn) return c.dnn;
  if (family == ModelKind::cnn) return c.cnn;
  return c.rnn;
}

void check_range(const FamilyRange& r, const char* family) {
  const std::string f = family;
  if (r.min_layers == 0 || r.min_layers > r.max_layers) throw ConfigError(f + " layer range is empty");
  if (r.min_nodes == 0 || r.min_nodes > r.max_nodes) throw ConfigError(f + " node range is empty");
}

std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool is_rnn(ModelKind k) { return k == ModelKind::rnn_gru || k == ModelKind::rnn_lstm; }

double accuracy_of(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

std::string family_tag(ModelKind k) {
  if (k == ModelKind::dnn) return "DNN";
  if (k == ModelKind::cnn) return "CNN";
  return "RNN";
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "/" : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

void EnsembleConfig::validate() const {
  if (total() == 0) throw ConfigError("ensemble needs at least one member");
  if (total() % 2 == 0) throw ConfigError("ensemble member count must be odd for a binary vote, got " + std::to_string(total()));
  if (dnn_models) check_range(dnn, "DNN");
  if (cnn_models) {
    check_range(cnn, "CNN");
    if (min_kernel == 0 || min_kernel > max_kernel) throw ConfigError("CNN kernel range is empty");
  }
  if (rnn_models) {
    check_range(rnn, "RNN");
    if (rnn_cells.empty()) throw ConfigError("no recurrent cell types to draw from");
    for (auto c : rnn_cells)
      if (!is_rnn(c)) throw ConfigError("not a recurrent cell: " + to_string(c));
  }
  if (epochs == 0) throw ConfigError("ensemble epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (max_retries == 0) throw ConfigError("max_retries must be at least 1");
}

std::string MemberSpec::name() const { return family_tag(family) + "-" + std::to_string(ordinal); }

std::vector<MemberSpec> sample_architectures(const EnsembleConfig& config, const InputShape& shape) {
  config.validate();
  std::vector<MemberSpec> out;
  const std::array<std::pair<ModelKind, std::size_t>, 3> plan{
      {{ModelKind::dnn, config.dnn_models}, {ModelKind::cnn, config.cnn_models}, {ModelKind::rnn_gru, config.rnn_models}}};
  std::size_t index = 0;
  for (const auto& [family, count] : plan) {
    for (std::size_t k = 0; k < count; ++k, ++index) {
      MemberSpec m;
      m.family = family;
      m.ordinal = k;
      m.seed = derive_seed(config.seed, index);
      Rng rng(m.seed);
      const auto& range = range_for(config, family);
      bool built = false;
      std::string last_error;
      for (m.draws = 1; m.draws <= config.max_retries && !built; ++m.draws) {
        m.layers = draw(rng, range.min_layers, range.max_layers);
        m.nodes.assign(m.layers, 0);
        for (auto& n : m.nodes) n = draw(rng, range.min_nodes, range.max_nodes);
        m.kernels.clear();
        try {
          if (family == ModelKind::dnn) {
            m.architecture = neural::build_dnn(InputMode::tfidf_vector, shape.tfidf_dim, m.nodes, config.dropout);
          } else if (family == ModelKind::cnn) {
            for (std::size_t b = 0; b < m.layers; ++b) m.kernels.push_back(draw(rng, config.min_kernel, config.max_kernel));
            auto spec = neural::build_cnn(InputMode::embedding_sequence, config.max_len, m.kernels, m.nodes[0],
                                          config.dropout, shape.embed_rows, shape.embed_dim);
            for (auto& l : spec.layers)
              if (l.kind == LayerKind::conv1d) l.units = m.nodes[static_cast<std::size_t>(l.branch)];
            spec.shapes();
            m.architecture = std::move(spec);
          } else {
            const auto cell = config.rnn_cells[draw(rng, 0, config.rnn_cells.size() - 1)];
            m.family = cell;
            auto spec = neural::build_rnn(cell, InputMode::embedding_sequence, config.rnn_max_len, m.layers, m.nodes[0],
                                          config.dropout, shape.embed_rows, shape.embed_dim);
            std::size_t r = 0;
            for (auto& l : spec.layers)
              if (l.kind == LayerKind::gru || l.kind == LayerKind::lstm) l.units = m.nodes[r++];
            spec.shapes();
            m.architecture = std::move(spec);
          }
          built = true;
        } catch (const ShapeError& e) {
          last_error = e.what();
        }
      }
      --m.draws;
      if (!built)
        throw ConfigError("could not draw a valid " + m.name() + " architecture in " +
                          std::to_string(config.max_retries) + " attempts: " + last_error);
      out.push_back(std::move(m));
    }
  }
  return out;
}

const neural::NeuralDataset& EnsembleData::input(ModelKind family, Split split) const {
  const auto s = static_cast<std::size_t>(split);
  if (family == ModelKind::dnn) return tfidf[s];
  if (family == ModelKind::cnn) return sequences[s];
  if (is_rnn(family)) return rnn_sequences[s];
  throw ConfigError("not an ensemble member family: " + to_string(family));
}

InputShape EnsembleData::shape() const {
  InputShape s;
  s.tfidf_dim = tfidf[0].tfidf.cols();
  if (embeddings) {
    s.embed_rows = embeddings->size() + 1;
    s.embed_dim = embeddings->dim();
  }
  return s;
}

std::size_t EnsembleModel::voting_members() const {
  return static_cast<std::size_t>(std::count_if(members.begin(), members.end(), [](const auto& m) { return !m.excluded; }));
}

std::vector<int> vote(std::span<const std::vector<int>> preds) {
  if (preds.empty()) throw ConfigError("vote needs at least one member");
  if (preds.size() % 2 == 0)
    throw ConfigError("vote needs an odd number of members, got " + std::to_string(preds.size()));
  const std::size_t n = preds[0].size();
  for (const auto& p : preds)
    if (p.size() != n) throw ShapeError("member prediction lengths differ");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t real = 0;
    for (const auto& p : preds) {
      if (p[i] != kFake && p[i] != kReal) throw Error("vote: label " + std::to_string(p[i]) + " is not 0 or 1");
      real += p[i] == kReal;
    }
    out[i] = 2 * real > preds.size() ? kReal : kFake;
  }
  return out;
}

namespace {

void train_member(const EnsembleConfig& config, const EnsembleData& data, EnsembleMember& m) {
  const auto& train = data.input(m.spec.family, Split::train);
  const auto& val = data.input(m.spec.family, Split::validation);
  const auto& test = data.input(m.spec.family, Split::test);
  const EmbeddingTable* table = m.spec.family == ModelKind::dnn ? nullptr : data.embeddings;
  std::string failure;
  for (m.attempts = 1; m.attempts <= 2; ++m.attempts) {
    neural::TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.adam.learning_rate = config.learning_rate;
    tc.clip_norm = config.clip_norm;
    tc.abort_loss = config.abort_loss;
    tc.seed = derive_seed(m.spec.seed, 100 + m.attempts);
    try {
      auto r = neural::train(m.spec.architecture, train, val, tc, table);
      m.train_seed = tc.seed;
      m.history = std::move(r.history);
      m.validation_accuracy = m.history.at(r.best_epoch - 1).validation_accuracy;
      m.test_predictions = r.network.predict(test).labels;
      m.test_accuracy = accuracy_of(m.test_predictions, test.labels);
      m.network = std::move(r.network);
      if (m.attempts == 2) m.note = "retrained after divergence: " + failure;
      return;
    } catch (const neural::DivergenceError& e) {
      failure = e.what();
    }
  }
  m.attempts = 2;
  m.excluded = true;
  m.note = "excluded after two divergent runs: " + failure;
}

}  // namespace

EnsembleModel train_ensemble(const EnsembleConfig& config, const EnsembleData& data) {
  const auto start = std::chrono::steady_clock::now();
  if (config.cnn_models + config.rnn_models > 0 && !data.embeddings)
    throw ConfigError("CNN and RNN members need an embedding table");
  auto specs = sample_architectures(config, data.shape());
  EnsembleModel model;
  model.members.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) model.members[i].spec = std::move(specs[i]);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < model.members.size();) {
      try {
        train_member(config, data, model.members[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.workers, 1, model.members.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& m : model.members)
    if (m.excluded) model.warnings.push_back(m.spec.name() + ": " + m.note);
  enforce_odd_vote(model);

  std::vector<std::vector<int>> preds;
  for (const auto& m : model.members)
    if (!m.excluded) preds.push_back(m.test_predictions);
  model.test_predictions = vote(preds);
  model.combined_accuracy = accuracy_of(model.test_predictions, data.input(model.members[0].spec.family, Split::test).labels);
  model.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return model;
}

void enforce_odd_vote(EnsembleModel& model) {
  if (model.voting_members() == 0) throw NonFiniteError("every ensemble member diverged");
  if (model.voting_members() % 2 == 1) return;
  ModelKind lost = ModelKind::dnn;
  for (const auto& m : model.members)
    if (m.excluded) lost = m.spec.family;
  auto same_family = [&](const EnsembleMember& m) {
    return m.spec.family == lost || (is_rnn(m.spec.family) && is_rnn(lost));
  };
  EnsembleMember* weakest = nullptr;
  for (int pass = 0; pass < 2 && !weakest; ++pass)
    for (auto& m : model.members)
      if (!m.excluded && (pass == 1 || same_family(m)) &&
          (!weakest || m.validation_accuracy < weakest->validation_accuracy))
        weakest = &m;
  weakest->excluded = true;
  weakest->note = "excluded to keep the vote count odd";
  model.warnings.push_back(weakest->spec.name() + ": " + weakest->note);
}

std::vector<int> predict(const EnsembleModel& model, const EnsembleData& data, Split split) {
  std::vector<std::vector<int>> preds;
  for (const auto& m : model.members) {
    if (m.excluded) continue;
    if (!m.network) throw Error(m.spec.name() + " has no trained network");
    auto net = *m.network;
    preds.push_back(net.predict(data.input(m.spec.family, split)).labels);
  }
  return vote(preds);
}

std::string member_table(const EnsembleModel& model) {
  std::ostringstream out;
  out << "| Model | Layers | Nodes | Accuracy (%) |\n|---|---|---|---|\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& m : model.members) {
    out << "| " << m.spec.name() << " | " << m.spec.layers << " | " << join(m.spec.nodes) << " | ";
    if (m.excluded && !m.network) out << "diverged";
    else out << 100.0 * m.test_accuracy;
    if (m.excluded && m.network) out << " (not voting)";
    out << " |\n";
  }
  out << "| Combined (majority vote) | | | " << 100.0 * model.combined_accuracy << " |\n";
  return out.str();
}

void save_ensemble(const EnsembleModel& model, const std::string& dir, std::uint64_t vocabulary_hash,
                   std::uint64_t pipeline_hash) {
  std::filesystem::create_directories(dir);
  Json manifest;
  manifest["combined_accuracy"] = model.combined_accuracy;
  manifest["vocabulary_hash"] = hex64(vocabulary_hash);
  manifest["pipeline_hash"] = hex64(pipeline_hash);
  manifest["warnings"] = model.warnings;
  manifest["members"] = Json::array();
  for (const auto& m : model.members) {
    Json j;
    j["name"] = m.spec.name();
    j["family"] = to_string(m.spec.family);
    j["ordinal"] = m.spec.ordinal;
    j["sample_seed"] = m.spec.seed;
    j["train_seed"] = m.train_seed;
    j["attempts"] = m.attempts;
    j["layers"] = m.spec.layers;
    j["nodes"] = m.spec.nodes;
    j["kernels"] = m.spec.kernels;
    j["draws"] = m.spec.draws;
    j["architecture"] = Json::parse(m.spec.architecture.to_json());
    j["validation_accuracy"] = m.validation_accuracy;
    j["test_accuracy"] = m.test_accuracy;
    j["excluded"] = m.excluded;
    j["note"] = m.note;
    if (m.network) {
      const std::string file = m.spec.name() + ".ifdm";
      write_file((std::filesystem::path(dir) / file).string(),
                 encode_container(m.network->to_container(vocabulary_hash, pipeline_hash)));
      j["container"] = file;
    }
    manifest["members"].push_back(std::move(j));
  }
  write_file((std::filesystem::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

EnsembleModel load_ensemble(const std::string& dir, std::uint64_t vocabulary_hash, std::uint64_t pipeline_hash) {
  Json manifest;
  try {
    manifest = Json::parse(read_file((std::filesystem::path(dir) / "manifest.json").string()));
  } catch (const Json::exception& e) {
    throw ParseError(0, std::string("ensemble manifest: ") + e.what());
  }
  EnsembleModel model;
  try {
    model.combined_accuracy = manifest.at("combined_accuracy").get<double>();
    model.warnings = manifest.at("warnings").get<std::vector<std::string>>();
    for (const auto& j : manifest.at("members")) {
      EnsembleMember m;
      m.spec.family = parse_model_kind(j.at("family").get<std::string>());
      m.spec.ordinal = j.at("ordinal").get<std::size_t>();
      m.spec.seed = j.at("sample_seed").get<std::uint64_t>();
      m.spec.layers = j.at("layers").get<std::size_t>();
      m.spec.nodes = j.at("nodes").get<std::vector<std::size_t>>();
      m.spec.kernels = j.at("kernels").get<std::vector<std::size_t>>();
      m.spec.draws = j.at("draws").get<std::size_t>();
      m.spec.architecture = ArchitectureSpec::from_json(j.at("architecture").dump());
      m.train_seed = j.at("train_seed").get<std::uint64_t>();
      m.attempts = j.at("attempts").get<std::size_t>();
      m.validation_accuracy = j.at("validation_accuracy").get<double>();
      m.test_accuracy = j.at("test_accuracy").get<double>();
      m.excluded = j.at("excluded").get<bool>();
      m.note = j.at("note").get<std::string>();
      if (j.contains("container")) {
        const auto path = (std::filesystem::path(dir) / j.at("container").get<std::string>()).string();
        m.network = neural::load_network(decode_container(read_file(path)), vocabulary_hash, pipeline_hash);
      }
      model.members.push_back(std::move(m));
    }
  } catch (const Json::exception& e) {
    throw ParseError(0, std::string("ensemble manifest: ") + e.what());
  }
  if (model.voting_members() % 2 == 0) throw ConfigError("ensemble manifest has an even number of voting members");
  return model;
}

}  // namespace infodemic::rmdl
