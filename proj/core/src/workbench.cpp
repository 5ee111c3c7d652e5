#include "infodemic/workbench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

namespace infodemic::workbench {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

// ------------------------------------------------------------ value parsing

std::string trimmed(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " + expected);
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a non-negative integer");
  return out;
}

std::size_t to_size(std::string_view key, std::string_view v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string from_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string from_bool(bool v) { return v ? "true" : "false"; }

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    auto item = trimmed(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::size_t> to_sizes(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_size(key, s));
  if (out.empty()) bad_value(key, v, "a non-empty list of integers");
  return out;
}

std::string from_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::pair<std::size_t, std::size_t> to_range(std::string_view key, std::string_view v) {
  const auto dash = v.find('-');
  if (dash == std::string_view::npos) bad_value(key, v, "a range like 2-5");
  return {to_size(key, trimmed(v.substr(0, dash))), to_size(key, trimmed(v.substr(dash + 1)))};
}

std::string from_range(std::size_t a, std::size_t b) { return std::to_string(a) + "-" + std::to_string(b); }

// ------------------------------------------------------------ key table

struct Entry {
  ConfigKey key;
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define STR_KEY(name, field, help) \
  Entry{{name, help}, [](RunConfig& c, std::string_view, std::string_view v) { c.field = std::string(v); }, \
        [](const RunConfig& c) { return c.field; }}
#define SIZE_KEY(name, field, help) \
  Entry{{name, help}, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = to_size(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }}
#define DOUBLE_KEY(name, field, help) \
  Entry{{name, help}, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = to_double(k, v); }, \
        [](const RunConfig& c) { return from_double(c.field); }}
#define BOOL_KEY(name, field, help) \
  Entry{{name, help}, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = to_bool(k, v); }, \
        [](const RunConfig& c) { return from_bool(c.field); }}
#define RANGE_KEY(name, lo, hi, help) \
  Entry{{name, help}, \
        [](RunConfig& c, std::string_view k, std::string_view v) { std::tie(c.lo, c.hi) = to_range(k, v); }, \
        [](const RunConfig& c) { return from_range(c.lo, c.hi); }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      STR_KEY("data.train", train_path, "training split (CSV or TSV)"),
      STR_KEY("data.validation", validation_path, "validation split"),
      STR_KEY("data.test", test_path, "test split"),
      STR_KEY("data.id_column", columns.id, "id column name"),
      STR_KEY("data.text_column", columns.text, "text column name"),
      STR_KEY("data.label_column", columns.label, "label column name (real/fake)"),
      SIZE_KEY("data.synthetic", synthetic, "generate a corpus with this many training documents instead (0 = off)"),
      STR_KEY("embeddings.path", embeddings_path, "GloVe-format text file"),
      SIZE_KEY("embeddings.dim", embedding_dim, "embedding dimension"),
      STR_KEY("embeddings.url", embeddings_url, "download location used by fetch-embeddings"),
      STR_KEY("embeddings.sha256", embeddings_sha256, "expected SHA-256 of the downloaded file"),
      BOOL_KEY("preprocess.stem", stem, "Snowball-stem tokens for TF-IDF"),
      BOOL_KEY("preprocess.drop_numeric", drop_numeric, "drop purely numeric tokens"),
      STR_KEY("preprocess.stoplist", stoplist_path, "stopword file (empty = bundled list)"),
      SIZE_KEY("features.min_df", min_df, "minimum document frequency of a vocabulary term"),
      BOOL_KEY("features.l2_normalize", l2_normalize, "L2-normalize TF-IDF rows"),
      DOUBLE_KEY("nb.alpha", classic.nb_alpha, "Laplace smoothing"),
      SIZE_KEY("knn.k", classic.knn_k, "neighbours"),
      Entry{{"knn.metric", "auto, cosine or euclidean"},
            [](RunConfig& c, std::string_view k, std::string_view v) {
              if (v == "auto") c.classic.knn_metric.reset();
              else if (v == "cosine") c.classic.knn_metric = DistanceMetric::cosine;
              else if (v == "euclidean") c.classic.knn_metric = DistanceMetric::euclidean;
              else bad_value(k, v, "auto, cosine or euclidean");
            },
            [](const RunConfig& c) -> std::string {
              if (!c.classic.knn_metric) return "auto";
              return *c.classic.knn_metric == DistanceMetric::cosine ? "cosine" : "euclidean";
            }},
      SIZE_KEY("rf.trees", classic.rf_trees, "trees in the forest"),
      SIZE_KEY("rf.min_leaf", classic.rf_min_leaf, "minimum samples per leaf"),
      SIZE_KEY("rf.max_features", classic.rf_max_features, "features tried per split (0 = sqrt)"),
      SIZE_KEY("rf.max_depth", classic.rf_max_depth, "tree depth cap (0 = none)"),
      SIZE_KEY("rf.workers", classic.workers, "threads growing trees"),
      SIZE_KEY("gb.estimators", classic.gb_estimators, "boosting stages"),
      DOUBLE_KEY("gb.learning_rate", classic.gb_learning_rate, "shrinkage"),
      SIZE_KEY("gb.max_depth", classic.gb_max_depth, "depth of each stage tree"),
      SIZE_KEY("nn.epochs", epochs, "training epochs"),
      SIZE_KEY("nn.batch_size", batch_size, "mini-batch size"),
      DOUBLE_KEY("nn.learning_rate", learning_rate, "Adam step size"),
      DOUBLE_KEY("nn.clip_norm", clip_norm, "gradient norm cap (0 = recurrent default only)"),
      Entry{{"nn.precision", "f64 (f32 is not supported)"},
            [](RunConfig& c, std::string_view k, std::string_view v) {
              if (v == "f64") c.precision = neural::Precision::f64;
              else if (v == "f32") c.precision = neural::Precision::f32;
              else bad_value(k, v, "f64 or f32");
            },
            [](const RunConfig& c) -> std::string { return c.precision == neural::Precision::f64 ? "f64" : "f32"; }},
      DOUBLE_KEY("nn.dropout", neural.dropout, "dropout rate"),
      Entry{{"nn.dnn_widths", "hidden dense widths"},
            [](RunConfig& c, std::string_view k, std::string_view v) { c.neural.dnn_widths = to_sizes(k, v); },
            [](const RunConfig& c) { return from_sizes(c.neural.dnn_widths); }},
      Entry{{"nn.cnn_kernels", "kernel width of each convolution branch"},
            [](RunConfig& c, std::string_view k, std::string_view v) { c.neural.cnn_kernel_widths = to_sizes(k, v); },
            [](const RunConfig& c) { return from_sizes(c.neural.cnn_kernel_widths); }},
      SIZE_KEY("nn.cnn_filters", neural.cnn_filters, "filters per branch"),
      SIZE_KEY("nn.rnn_layers", neural.rnn_layers, "stacked recurrent layers"),
      SIZE_KEY("nn.rnn_hidden", neural.rnn_hidden, "recurrent hidden size"),
      SIZE_KEY("nn.max_len", neural.max_len, "sequence length for DNN/CNN embedding input"),
      SIZE_KEY("nn.rnn_max_len", neural.rnn_max_len, "sequence length for recurrent models"),
      DOUBLE_KEY("nn.recurrent_clip_norm", neural.recurrent_clip_norm, "gradient norm cap for recurrent models"),
      BOOL_KEY("paper_scale", paper_scale, "lift the reduced recurrent sequence length"),
      SIZE_KEY("rmdl.models_per_family", ensemble_models, "members per family"),
      SIZE_KEY("rmdl.epochs", ensemble.epochs, "epochs per member"),
      RANGE_KEY("rmdl.dnn_layers", ensemble.dnn.min_layers, ensemble.dnn.max_layers, "dense layer count range"),
      RANGE_KEY("rmdl.cnn_layers", ensemble.cnn.min_layers, ensemble.cnn.max_layers, "convolution branch count range"),
      RANGE_KEY("rmdl.rnn_layers", ensemble.rnn.min_layers, ensemble.rnn.max_layers, "recurrent layer count range"),
      Entry{{"rmdl.nodes", "width range shared by all families"},
            [](RunConfig& c, std::string_view k, std::string_view v) {
              const auto [lo, hi] = to_range(k, v);
              for (auto* r : {&c.ensemble.dnn, &c.ensemble.cnn, &c.ensemble.rnn}) {
                r->min_nodes = lo;
                r->max_nodes = hi;
              }
            },
            [](const RunConfig& c) { return from_range(c.ensemble.dnn.min_nodes, c.ensemble.dnn.max_nodes); }},
      RANGE_KEY("rmdl.kernels", ensemble.min_kernel, ensemble.max_kernel, "CNN member kernel width range"),
      Entry{{"rmdl.rnn_cells", "cells recurrent members draw from"},
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.ensemble.rnn_cells.clear();
              for (const auto& s : split_list(v)) {
                const auto kind = parse_model_kind(s);
                if (kind != ModelKind::rnn_gru && kind != ModelKind::rnn_lstm) bad_value(k, v, "a list of gru/lstm");
                c.ensemble.rnn_cells.push_back(kind);
              }
              if (c.ensemble.rnn_cells.empty()) bad_value(k, v, "a list of gru/lstm");
            },
            [](const RunConfig& c) {
              std::string out;
              for (auto k : c.ensemble.rnn_cells) out += (out.empty() ? "" : ",") + to_string(k);
              return out;
            }},
      DOUBLE_KEY("rmdl.dropout", ensemble.dropout, "member dropout"),
      SIZE_KEY("rmdl.batch_size", ensemble.batch_size, "member mini-batch size"),
      DOUBLE_KEY("rmdl.learning_rate", ensemble.learning_rate, "member Adam step size"),
      Entry{{"run.seed", "master seed"},
            [](RunConfig& c, std::string_view k, std::string_view v) { c.seed = to_u64(k, v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      STR_KEY("run.output_dir", output_dir, "parent of run directories"),
      STR_KEY("run.cache_dir", cache_dir, "prepared-data cache"),
      SIZE_KEY("run.workers", workers, "grid cells (and ensemble members) trained at once"),
      Entry{{"run.only", "comma list of model kinds for the grid (empty = all)"},
            [](RunConfig& c, std::string_view, std::string_view v) {
              c.only.clear();
              for (const auto& s : split_list(v)) c.only.push_back(parse_model_kind(s));
            },
            [](const RunConfig& c) {
              std::string out;
              for (auto k : c.only) out += (out.empty() ? "" : ",") + to_string(k);
              return out;
            }},
  };
  return table;
}

#undef STR_KEY
#undef SIZE_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY
#undef RANGE_KEY

const Entry& entry(std::string_view key) {
  for (const auto& e : entries())
    if (e.key.name == key) return e;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

// ------------------------------------------------------------ preparation

PreprocessConfig preprocess_config(const RunConfig& c, bool for_embeddings) {
  PreprocessConfig p;
  p.drop_numeric = c.drop_numeric;
  p.stem = for_embeddings ? false : c.stem;
  p.stoplist_path = c.stoplist_path;
  return p;
}

std::string join_tokens(const TokenSequence& t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) out += (i ? " " : "") + t[i];
  return out;
}

TokenSequence split_tokens(std::string_view s) {
  TokenSequence out;
  std::size_t start = 0;
  while (start < s.size()) {
    auto sp = s.find(' ', start);
    if (sp == std::string_view::npos) sp = s.size();
    if (sp > start) out.emplace_back(s.substr(start, sp - start));
    start = sp + 1;
  }
  return out;
}

std::string sanitize_id(std::string id) {
  std::replace_if(id.begin(), id.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
  return id;
}

std::string tokens_file(const PreparedData& d, std::size_t s) {
  std::string out;
  for (std::size_t i = 0; i < d.ids[s].size(); ++i)
    out += d.ids[s][i] + "\t" + std::to_string(d.labels[s][i]) + "\t" + join_tokens(d.tfidf_tokens[s][i]) + "\t" +
           join_tokens(d.embedding_tokens[s][i]) + "\n";
  return out;
}

void read_tokens_file(PreparedData& d, std::size_t s, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    std::array<std::string_view, 4> f;
    std::string_view rest = line;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto tab = k < 3 ? rest.find('\t') : std::string_view::npos;
      if (k < 3 && tab == std::string_view::npos) throw ParseError(line_no, "cached token file is corrupt");
      f[k] = rest.substr(0, tab);
      if (k < 3) rest.remove_prefix(tab + 1);
    }
    d.ids[s].emplace_back(f[0]);
    d.labels[s].push_back(f[1] == "1" ? kReal : kFake);
    d.tfidf_tokens[s].push_back(split_tokens(f[2]));
    d.embedding_tokens[s].push_back(split_tokens(f[3]));
  }
}

void finish_hashes(PreparedData& d, const RunConfig& c) {
  d.l2_normalize = c.l2_normalize;
  const Preprocessor tf(preprocess_config(c, false)), em(preprocess_config(c, true));
  d.tfidf_pipeline_hash = mix64(tf.hash() ^ mix64(c.min_df) ^ (c.l2_normalize ? 0x5bd1e995ULL : 0));
  d.embedding_pipeline_hash = mix64(em.hash() ^ mix64(c.embedding_dim));
}

struct SplitSources {
  std::array<std::string, 3> paths;
  std::string embeddings;
};

SplitSources synthesize(const RunConfig& c, const Log& log) {
  const auto sc = synthetic_config_for(c.synthetic, c.seed);
  const fs::path dir = fs::path(c.cache_dir) / ("synthetic-" + std::to_string(c.synthetic) + "-" + std::to_string(c.seed));
  SplitSources src;
  src.paths = {(dir / "train.csv").string(), (dir / "validation.csv").string(), (dir / "test.csv").string()};
  src.embeddings = (dir / ("embeddings-" + std::to_string(c.embedding_dim) + "d.txt")).string();
  if (fs::exists(src.paths[0]) && fs::exists(src.paths[1]) && fs::exists(src.paths[2]) && fs::exists(src.embeddings))
    return src;
  fs::create_directories(dir);
  const auto corpus = generate_synthetic_corpus(sc);
  ColumnNames cols;
  write_file(src.paths[0], write_split(corpus.train, TableFormat::csv, cols));
  write_file(src.paths[1], write_split(corpus.validation, TableFormat::csv, cols));
  write_file(src.paths[2], write_split(corpus.test, TableFormat::csv, cols));
  write_file(src.embeddings, synthetic_embeddings_text(sc, c.embedding_dim));
  if (log) log("generated synthetic corpus in " + dir.string());
  return src;
}

}  // namespace

// ------------------------------------------------------------ config API

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

void set_option(RunConfig& config, std::string_view key, std::string_view value) {
  entry(key).set(config, key, trimmed(value));
}

std::string get_option(const RunConfig& config, std::string_view key) { return entry(key).get(config); }

void apply_config_text(RunConfig& config, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trimmed(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    try {
      set_option(config, trimmed(std::string_view(t).substr(0, eq)), trimmed(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

std::string config_text(const RunConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += e.key.name + " = " + e.get(config) + "\n";
  return out;
}

neural::NeuralDefaults neural_defaults(const RunConfig& config) {
  auto d = config.neural;
  if (config.paper_scale) d.rnn_max_len = std::max(d.rnn_max_len, neural::NeuralDefaults::paper_scale().rnn_max_len);
  return d;
}

rmdl::EnsembleConfig ensemble_config(const RunConfig& config) {
  auto e = config.ensemble;
  e.dnn_models = e.cnn_models = e.rnn_models = config.ensemble_models;
  e.seed = cell_seed(config.seed, ModelKind::rmdl, std::nullopt);
  e.workers = config.workers;
  const auto d = neural_defaults(config);
  e.max_len = d.max_len;
  e.rnn_max_len = d.rnn_max_len;
  return e;
}

// ------------------------------------------------------------ data

std::uint64_t PreparedData::vocabulary_hash(FeatureKind kind) const {
  if (kind == FeatureKind::tfidf) return vocabulary.hash();
  return embeddings ? embeddings->hash() : 0;
}

std::uint64_t PreparedData::pipeline_hash(FeatureKind kind) const {
  return kind == FeatureKind::tfidf ? tfidf_pipeline_hash : embedding_pipeline_hash;
}

PreparedData prepare(const RunConfig& config, const Log& log) {
  SplitSources src;
  if (config.synthetic > 0) {
    src = synthesize(config, log);
    if (!config.embeddings_path.empty()) src.embeddings = config.embeddings_path;
  } else {
    src.paths = {config.train_path, config.validation_path, config.test_path};
    src.embeddings = config.embeddings_path;
    for (std::size_t s = 0; s < 3; ++s)
      if (src.paths[s].empty())
        throw ConfigError("no dataset configured: set data.train, data.validation and data.test, or use --synthetic N");
  }

  std::array<std::string, 3> raw;
  for (std::size_t s = 0; s < 3; ++s) raw[s] = read_file(src.paths[s]);
  std::string embed_raw;
  if (!src.embeddings.empty()) embed_raw = read_file(src.embeddings);

  std::uint64_t key = fnv1a64("infodemic-prepare-v1");
  for (const auto& r : raw) key = fnv1a64(r, mix64(key));
  key = fnv1a64(embed_raw, mix64(key));
  const Preprocessor tf_pre(preprocess_config(config, false)), em_pre(preprocess_config(config, true));
  key = mix64(key ^ tf_pre.hash()) ^ mix64(em_pre.hash() + config.min_df * 31 + config.embedding_dim);
  key = fnv1a64(config.columns.id + "\t" + config.columns.text + "\t" + config.columns.label, key);

  PreparedData d;
  d.cache_key = hex64(key);
  d.cache_path = (fs::path(config.cache_dir) / ("prepared-" + d.cache_key)).string();
  const fs::path dir(d.cache_path);

  if (fs::exists(dir / "manifest.json")) {
    try {
      const auto manifest = Json::parse(read_file((dir / "manifest.json").string()));
      for (std::size_t s = 0; s < 3; ++s) read_tokens_file(d, s, read_file((dir / (d.split_names[s] + ".tokens")).string()));
      d.vocabulary = Vocabulary::from_text(read_file((dir / "vocabulary.txt").string()));
      if (manifest.at("has_embeddings").get<bool>())
        d.embeddings = parse_embeddings(read_file((dir / "embeddings.txt").string()), config.embedding_dim).table;
      d.notes = manifest.at("notes").get<std::vector<std::string>>();
      for (const auto& s : manifest.at("skipped")) d.skipped.push_back({s.at("line").get<std::size_t>(), s.at("message").get<std::string>()});
      d.cache_hit = true;
      finish_hashes(d, config);
      if (log) log("cache hit: " + d.cache_path);
      return d;
    } catch (const std::exception& e) {
      if (log) log(std::string("cache unreadable, rebuilding: ") + e.what());
      d = PreparedData{};
      d.cache_key = hex64(key);
      d.cache_path = dir.string();
    }
  }

  for (std::size_t s = 0; s < 3; ++s) {
    auto loaded = parse_split(raw[s], d.split_names[s], format_for_path(src.paths[s]), config.columns);
    for (auto& issue : loaded.skipped) {
      issue.message = d.split_names[s] + ": " + issue.message;
      d.skipped.push_back(issue);
    }
    for (auto& doc : loaded.split.documents) {
      d.ids[s].push_back(sanitize_id(doc.id));
      d.labels[s].push_back(doc.label);
      d.tfidf_tokens[s].push_back(tf_pre(doc.text));
      d.embedding_tokens[s].push_back(em_pre(doc.text));
    }
    if (d.ids[s].empty()) throw ConfigError(d.split_names[s] + " split has no usable documents");
  }
  d.vocabulary = Vocabulary::build(d.tfidf_tokens[0], config.min_df);

  if (!embed_raw.empty()) {
    auto loaded = parse_embeddings(embed_raw, config.embedding_dim);
    for (const auto& w : loaded.warnings) d.notes.push_back("embeddings: " + w);
    // keep only the words the corpus can look up
    std::vector<std::string> keep;
    std::unordered_set<std::string> seen;
    for (const auto& split : d.embedding_tokens)
      for (const auto& doc : split)
        for (const auto& t : doc)
          if (seen.insert(t).second && loaded.table.row_of(t)) keep.push_back(t);
    std::sort(keep.begin(), keep.end());
    d.embeddings = loaded.table.subset(keep);
    d.notes.push_back("embedding coverage: " + std::to_string(keep.size()) + " of " + std::to_string(seen.size()) +
                      " corpus word types");
  }

  fs::create_directories(dir);
  for (std::size_t s = 0; s < 3; ++s) write_file((dir / (d.split_names[s] + ".tokens")).string(), tokens_file(d, s));
  write_file((dir / "vocabulary.txt").string(), d.vocabulary.to_text());
  if (d.embeddings) write_file((dir / "embeddings.txt").string(), d.embeddings->to_text());
  Json manifest;
  manifest["key"] = d.cache_key;
  manifest["sources"] = src.paths;
  manifest["embeddings_source"] = src.embeddings;
  manifest["documents"] = {{"train", d.size(0)}, {"validation", d.size(1)}, {"test", d.size(2)}};
  manifest["vocabulary_size"] = d.vocabulary.size();
  manifest["has_embeddings"] = d.embeddings.has_value();
  manifest["notes"] = d.notes;
  manifest["skipped"] = Json::array();
  for (const auto& s : d.skipped) manifest["skipped"].push_back({{"line", s.line}, {"message", s.message}});
  write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  finish_hashes(d, config);
  if (log) log("prepared " + d.cache_path);
  return d;
}

SparseMatrix tfidf_rows(const PreparedData& data, const std::vector<TokenSequence>& tokens) {
  SparseMatrix m(data.vocabulary.size());
  for (const auto& doc : tokens) m.append_row(tfidf_vector(doc, data.vocabulary, data.l2_normalize));
  return m;
}

SparseMatrix pooled_rows(const PreparedData& data, const std::vector<TokenSequence>& tokens) {
  if (!data.embeddings) throw ConfigError("no embedding table is configured (set embeddings.path)");
  SparseMatrix m(data.embeddings->dim());
  for (const auto& doc : tokens) m.append_dense_row(embed_mean(doc, *data.embeddings));
  return m;
}

neural::NeuralDataset sequence_rows(const PreparedData& data, const std::vector<TokenSequence>& tokens,
                                    std::size_t max_len) {
  if (!data.embeddings) throw ConfigError("no embedding table is configured (set embeddings.path)");
  neural::NeuralDataset ds;
  ds.mode = neural::InputMode::embedding_sequence;
  for (const auto& doc : tokens) ds.sequences.push_back(encode_sequence(doc, *data.embeddings, max_len));
  ds.labels.assign(tokens.size(), kFake);
  return ds;
}

SparseMatrix tfidf_matrix(const PreparedData& data, std::size_t split) {
  return tfidf_rows(data, data.tfidf_tokens.at(split));
}

SparseMatrix pooled_matrix(const PreparedData& data, std::size_t split) {
  return pooled_rows(data, data.embedding_tokens.at(split));
}

neural::NeuralDataset neural_dataset(const PreparedData& data, std::size_t split, FeatureKind kind,
                                     std::size_t max_len) {
  neural::NeuralDataset ds;
  if (kind == FeatureKind::tfidf) {
    ds.mode = neural::InputMode::tfidf_vector;
    ds.tfidf = tfidf_matrix(data, split);
  } else {
    ds = sequence_rows(data, data.embedding_tokens.at(split), max_len);
  }
  ds.labels = data.labels.at(split);
  return ds;
}

rmdl::EnsembleData ensemble_data(const PreparedData& data, const rmdl::EnsembleConfig& config) {
  rmdl::EnsembleData e;
  e.embeddings = data.embeddings ? &*data.embeddings : nullptr;
  for (std::size_t s = 0; s < 3; ++s) {
    if (config.dnn_models) e.tfidf[s] = neural_dataset(data, s, FeatureKind::tfidf, 0);
    if (config.cnn_models) e.sequences[s] = neural_dataset(data, s, FeatureKind::embedding, config.max_len);
    if (config.rnn_models) e.rnn_sequences[s] = neural_dataset(data, s, FeatureKind::embedding, config.rnn_max_len);
  }
  return e;
}

Featurized preprocess_documents(const RunConfig& config, const std::vector<LabeledDocument>& docs) {
  const Preprocessor tf(preprocess_config(config, false)), em(preprocess_config(config, true));
  Featurized out;
  for (const auto& d : docs) {
    out.tfidf_tokens.push_back(tf(d.text));
    out.embedding_tokens.push_back(em(d.text));
  }
  return out;
}

// ------------------------------------------------------------ cells

void check_cell(ModelKind model, FeatureKind features, const PreparedData& data) {
  if (model == ModelKind::multinomial_nb && features == FeatureKind::embedding)
    throw ConfigError(
        "Multinomial Naive Bayes needs non-negative feature counts; mean-pooled word embeddings take negative "
        "values, so this combination is not trained");
  if (model == ModelKind::rmdl) throw ConfigError("the ensemble reads both feature kinds; train it without a featurizer");
  if (features == FeatureKind::embedding && !data.embeddings)
    throw ConfigError("no embedding table is configured (set embeddings.path)");
}

std::uint64_t cell_seed(std::uint64_t master, ModelKind model, std::optional<FeatureKind> features) {
  return derive_seed(master, fnv1a64(to_string(model) + "/" + (features ? to_string(*features) : "both")));
}

CellOutcome run_cell(const PreparedData& data, const RunConfig& config, ModelKind model,
                     std::optional<FeatureKind> features) {
  CellOutcome out;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  if (model == ModelKind::rmdl) {
    const auto ec = ensemble_config(config);
    if (ec.cnn_models + ec.rnn_models > 0 && !data.embeddings)
      throw ConfigError("the ensemble's CNN and RNN members need an embedding table (set embeddings.path)");
    const auto ed = ensemble_data(data, ec);
    auto ens = rmdl::train_ensemble(ec, ed);
    out.report = make_report(model, std::nullopt, data.labels[2], ens.test_predictions, elapsed(), ec.seed);
    out.warnings = ens.warnings;
    out.ensemble = std::move(ens);
    return out;
  }

  if (!features) throw ConfigError(to_string(model) + " needs a featurizer");
  check_cell(model, *features, data);
  const auto seed = cell_seed(config.seed, model, features);
  const auto vh = data.vocabulary_hash(*features), ph = data.pipeline_hash(*features);

  if (is_classic(model)) {
    auto clf = make_classifier(model, *features, config.classic);
    const auto x_train = *features == FeatureKind::tfidf ? tfidf_matrix(data, 0) : pooled_matrix(data, 0);
    const auto x_test = *features == FeatureKind::tfidf ? tfidf_matrix(data, 2) : pooled_matrix(data, 2);
    out.fit = clf->fit(x_train, data.labels[0], seed);
    out.warnings = out.fit->warnings;
    const auto pred = clf->predict(x_test);
    out.report = make_report(model, features, data.labels[2], pred.labels, elapsed(), seed);
    out.container = encode_container(clf->to_container(vh, ph));
    return out;
  }

  const auto defaults = neural_defaults(config);
  const auto spec = neural::default_architecture(model, *features, defaults, data.vocabulary.size(),
                                                 data.embeddings ? data.embeddings->size() + 1 : 0,
                                                 data.embeddings ? data.embeddings->dim() : 0);
  const auto max_len = neural::sequence_length(model, defaults);
  const auto train_ds = neural_dataset(data, 0, *features, max_len);
  const auto val_ds = neural_dataset(data, 1, *features, max_len);
  const auto test_ds = neural_dataset(data, 2, *features, max_len);
  neural::TrainConfig tc;
  tc.epochs = config.epochs;
  tc.batch_size = config.batch_size;
  tc.adam.learning_rate = config.learning_rate;
  tc.seed = seed;
  tc.precision = config.precision;
  tc.clip_norm = config.clip_norm;
  if (tc.clip_norm == 0.0 && (model == ModelKind::rnn_gru || model == ModelKind::rnn_lstm))
    tc.clip_norm = defaults.recurrent_clip_norm;
  auto result = neural::train(spec, train_ds, val_ds, tc,
                              *features == FeatureKind::embedding ? &*data.embeddings : nullptr);
  const auto pred = result.network.predict(test_ds);
  out.report = make_report(model, features, data.labels[2], pred.labels, elapsed(), seed);
  out.history = std::move(result.history);
  out.container = encode_container(result.network.to_container(vh, ph));
  FitReport fit;
  fit.model = model;
  fit.features = *features;
  fit.seconds = result.seconds;
  fit.seed = seed;
  fit.hyperparameters = {{"epochs", std::to_string(tc.epochs)},
                         {"batch_size", std::to_string(tc.batch_size)},
                         {"learning_rate", from_double(tc.adam.learning_rate)},
                         {"clip_norm", from_double(tc.clip_norm)},
                         {"parameters", std::to_string(spec.parameter_count())},
                         {"best_epoch", std::to_string(result.best_epoch)}};
  if (*features == FeatureKind::embedding) fit.hyperparameters["max_len"] = std::to_string(max_len);
  fit.assumptions.push_back("weights of the best validation-accuracy epoch are kept");
  out.fit = std::move(fit);
  return out;
}

void write_cell(const CellOutcome& cell, const PreparedData& data, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path p(dir);
  if (!cell.container.empty()) write_file((p / "model.ifdm").string(), cell.container);
  if (!cell.history.empty()) write_file((p / "history.csv").string(), neural::history_csv(cell.history));
  if (cell.fit) {
    Json j;
    j["model"] = to_string(cell.fit->model);
    j["features"] = to_string(cell.fit->features);
    j["seconds"] = cell.fit->seconds;
    j["seed"] = cell.fit->seed;
    j["hyperparameters"] = cell.fit->hyperparameters;
    j["assumptions"] = cell.fit->assumptions;
    j["warnings"] = cell.fit->warnings;
    write_file((p / "fit.json").string(), j.dump(2) + "\n");
  }
  if (cell.ensemble) {
    const auto [vh, ph] = ensemble_hashes(data);
    rmdl::save_ensemble(*cell.ensemble, (p / "ensemble").string(), vh, ph);
    write_file((p / "members.md").string(), rmdl::member_table(*cell.ensemble));
  }
  const std::vector<EvalReport> one{cell.report};
  write_file((p / "metrics.csv").string(), metrics_csv(one));
}

std::vector<GridCell> grid_cells(const RunConfig& config) {
  const std::array<ModelKind, 9> order{ModelKind::random_forest, ModelKind::multinomial_nb, ModelKind::gradient_boost,
                                       ModelKind::knn,           ModelKind::dnn,            ModelKind::cnn,
                                       ModelKind::rnn_gru,       ModelKind::rnn_lstm,       ModelKind::rmdl};
  std::vector<GridCell> cells;
  for (auto m : order) {
    if (!config.only.empty() && std::find(config.only.begin(), config.only.end(), m) == config.only.end()) continue;
    if (m == ModelKind::rmdl) {
      cells.push_back({m, std::nullopt});
      continue;
    }
    cells.push_back({m, FeatureKind::tfidf});
    if (m != ModelKind::multinomial_nb) cells.push_back({m, FeatureKind::embedding});
  }
  return cells;
}

std::vector<std::string> directional_warnings(const std::vector<EvalReport>& reports) {
  std::vector<std::string> out;
  for (auto m : {ModelKind::random_forest, ModelKind::knn, ModelKind::gradient_boost}) {
    const EvalReport *t = nullptr, *e = nullptr;
    for (const auto& r : reports) {
      if (r.model != m || r.failure || !r.features) continue;
      (*r.features == FeatureKind::tfidf ? t : e) = &r;
    }
    if (t && e && t->accuracy < e->accuracy)
      out.push_back(display_name(m) + ": embedding accuracy " + pct(e->accuracy) +
                    " exceeds TF-IDF accuracy " + pct(t->accuracy));
  }
  return out;
}

GridResult run_grid(const PreparedData& data, const RunConfig& config, const std::string& run_dir, const Log& log) {
  const auto cells = grid_cells(config);
  std::vector<EvalReport> reports(cells.size());
  std::vector<std::vector<std::string>> cell_warnings(cells.size());
  std::string member_text;
  std::mutex mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
      const auto& c = cells[i];
      const std::string name = to_string(c.model) + "-" + (c.features ? to_string(*c.features) : "both");
      try {
        auto outcome = run_cell(data, config, c.model, c.features);
        write_cell(outcome, data, (fs::path(run_dir) / "cells" / name).string());
        std::lock_guard lock(mutex);
        reports[i] = outcome.report;
        for (const auto& w : outcome.warnings) cell_warnings[i].push_back(name + ": " + w);
        if (outcome.ensemble) member_text = rmdl::member_table(*outcome.ensemble);
        if (log) log(name + ": accuracy " + pct(outcome.report.accuracy) + "%");
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex);
        reports[i] = failed_report(c.model, c.features, e.what(), cell_seed(config.seed, c.model, c.features));
        cell_warnings[i].push_back(name + " failed: " + e.what());
        if (log) log(name + " failed: " + e.what());
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.workers, 1, std::max<std::size_t>(1, cells.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  GridResult g;
  g.reports = std::move(reports);
  g.member_table = member_text;
  for (auto& w : cell_warnings) g.warnings.insert(g.warnings.end(), w.begin(), w.end());
  for (auto& w : directional_warnings(g.reports)) g.warnings.push_back("directional check: " + w);

  const fs::path dir(run_dir);
  fs::create_directories(dir);
  write_file((dir / "metrics.csv").string(), metrics_csv(g.reports));
  write_file((dir / "timings.csv").string(), timings_csv(g.reports));
  std::string md = "# Comparison of models\n\n" + positive_class_note() + " Cells are test accuracy (%).\n\n" +
                   comparison_table(g.reports, TableStyle::markdown);
  if (!g.member_table.empty()) md += "\n## Ensemble members\n\n" + g.member_table;
  if (!g.warnings.empty()) {
    md += "\n## Warnings\n\n";
    for (const auto& w : g.warnings) md += "- " + w + "\n";
  }
  write_file((dir / "report.md").string(), md);
  write_file((dir / "table.txt").string(), comparison_table(g.reports, TableStyle::plain));
  return g;
}

std::pair<std::uint64_t, std::uint64_t> ensemble_hashes(const PreparedData& data) {
  return {mix64(data.vocabulary_hash(FeatureKind::tfidf) ^ mix64(data.vocabulary_hash(FeatureKind::embedding))),
          mix64(data.pipeline_hash(FeatureKind::tfidf) ^ mix64(data.pipeline_hash(FeatureKind::embedding)))};
}

LoadedModel load_model(const std::string& path, const PreparedData& data) {
  fs::path p(path);
  if (fs::is_directory(p)) {
    if (fs::exists(p / "model.ifdm")) p /= "model.ifdm";
    else if (fs::exists(p / "ensemble" / "manifest.json")) p /= "ensemble";
  }
  LoadedModel m;
  if (fs::is_directory(p)) {
    if (!fs::exists(p / "manifest.json")) throw ConfigError("no model container or ensemble manifest in " + p.string());
    const auto [vh, ph] = ensemble_hashes(data);
    m.kind = ModelKind::rmdl;
    m.ensemble = rmdl::load_ensemble(p.string(), vh, ph);
    return m;
  }
  const auto c = load_container(p.string());
  Json arch;
  try {
    arch = Json::parse(c.architecture);
  } catch (const Json::exception& e) {
    throw ParseError(0, std::string("model architecture: ") + e.what());
  }
  if (arch.contains("layers")) {
    auto spec = neural::ArchitectureSpec::from_json(c.architecture);
    m.kind = spec.family;
    m.features = spec.input == neural::InputMode::tfidf_vector ? FeatureKind::tfidf : FeatureKind::embedding;
    m.network = neural::load_network(c, data.vocabulary_hash(*m.features), data.pipeline_hash(*m.features));
  } else {
    m.classic = load_classifier(c);
    m.kind = m.classic->kind();
    m.features = m.classic->feature_kind();
    verify_container_hashes(c, data.vocabulary_hash(*m.features), data.pipeline_hash(*m.features));
  }
  return m;
}

Prediction predict_documents(LoadedModel& model, const PreparedData& data, const Featurized& docs) {
  const auto n = docs.tfidf_tokens.size();
  if (n == 0) return {};
  if (model.classic) {
    const auto x = *model.features == FeatureKind::tfidf ? tfidf_rows(data, docs.tfidf_tokens)
                                                         : pooled_rows(data, docs.embedding_tokens);
    return model.classic->predict(x);
  }
  auto input_for = [&](const neural::ArchitectureSpec& spec) {
    if (spec.input == neural::InputMode::tfidf_vector) {
      neural::NeuralDataset ds;
      ds.tfidf = tfidf_rows(data, docs.tfidf_tokens);
      ds.labels.assign(n, kFake);
      return ds;
    }
    return sequence_rows(data, docs.embedding_tokens, spec.input_dim);
  };
  if (model.network) return model.network->predict(input_for(model.network->spec()));

  std::vector<std::vector<int>> votes;
  for (auto& m : model.ensemble->members) {
    if (m.excluded) continue;
    votes.push_back(m.network->predict(input_for(m.network->spec())).labels);
  }
  Prediction out;
  out.labels = rmdl::vote(votes);
  for (std::size_t r = 0; r < n; ++r) {
    double real = 0;
    for (const auto& v : votes) real += v[r] == kReal;
    real /= static_cast<double>(votes.size());
    out.scores.push_back({1.0 - real, real});
  }
  return out;
}

std::string make_run_dir(const RunConfig& config) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = (fs::path(config.output_dir) / (std::string(stamp) + "-" + std::to_string(config.seed))).string();
  std::string dir = base;
  for (int k = 2; fs::exists(dir); ++k) dir = base + "-" + std::to_string(k);
  fs::create_directories(dir);
  return dir;
}

}  // namespace infodemic::workbench
