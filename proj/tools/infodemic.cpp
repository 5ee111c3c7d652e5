// infodemic: prepare data, train models, run the comparison grid, predict.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#ifdef INFODEMIC_HAVE_FETCH
#include <curl/curl.h>
#include <openssl/evp.h>
#endif

#include "infodemic/workbench.hpp"

namespace fs = std::filesystem;
using namespace infodemic;
using namespace infodemic::workbench;

namespace {

void log_line(const std::string& msg) { std::cerr << "[infodemic] " << msg << "\n"; }

struct GlobalOptions {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> synthetic;
  bool paper_scale = false;
  std::optional<std::string> only;
  std::optional<std::size_t> workers;
};

// defaults < config file < --set < dedicated flags
RunConfig resolve(const GlobalOptions& g) {
  RunConfig c;
  if (!g.config_file.empty()) apply_config_text(c, read_file(g.config_file));
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_option(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) c.seed = *g.seed;
  if (g.synthetic) c.synthetic = *g.synthetic;
  if (g.paper_scale) c.paper_scale = true;
  if (g.only) set_option(c, "run.only", *g.only);
  if (g.workers) c.workers = *g.workers;
  return c;
}

std::string start_run(const RunConfig& c) {
  const auto dir = make_run_dir(c);
  write_file((fs::path(dir) / "config.txt").string(), config_text(c));
  log_line("run directory " + dir);
  return dir;
}

void print_report(const EvalReport& r) {
  std::printf("%s / %s: accuracy %.2f%%  precision %.2f%%%s  recall %.2f%%%s  f1 %.2f%%%s  (tp %zu fp %zu tn %zu fn %zu)\n",
              display_name(r.model).c_str(), r.features ? display_name(*r.features).c_str() : "both", r.accuracy,
              r.precision, r.precision_defined ? "" : " (undefined)", r.recall, r.recall_defined ? "" : " (undefined)",
              r.f1, r.f1_defined ? "" : " (undefined)", r.confusion.tp, r.confusion.fp, r.confusion.tn, r.confusion.fn);
  std::printf("%s\n", positive_class_note().c_str());
}

int cmd_prepare(const RunConfig& c) {
  const auto data = prepare(c, log_line);
  write_file((fs::path(data.cache_path) / "config.txt").string(), config_text(c));
  std::printf("documents: train %zu, validation %zu, test %zu\n", data.size(0), data.size(1), data.size(2));
  std::printf("vocabulary: %zu terms\n", data.vocabulary.size());
  std::printf("embeddings: %s\n", data.embeddings ? (std::to_string(data.embeddings->size()) + " words").c_str() : "none");
  for (const auto& n : data.notes) std::printf("note: %s\n", n.c_str());
  if (!data.skipped.empty()) std::printf("skipped rows: %zu\n", data.skipped.size());
  std::printf("cache: %s (%s)\n", data.cache_path.c_str(), data.cache_hit ? "hit" : "built");
  return 0;
}

#ifdef INFODEMIC_HAVE_FETCH
std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char two[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(two, sizeof two, "%02x", md[i]);
    hex += two;
  }
  return hex;
}

std::size_t write_chunk(char* data, std::size_t size, std::size_t n, void* stream) {
  static_cast<std::ofstream*>(stream)->write(data, static_cast<std::streamsize>(size * n));
  return size * n;
}

int cmd_fetch(const RunConfig& c, std::string output) {
  if (c.embeddings_url.empty()) throw ConfigError("set embeddings.url to the embedding text file to download");
  if (c.embeddings_sha256.empty()) throw ConfigError("set embeddings.sha256; downloads are only accepted with a pinned checksum");
  if (output.empty()) output = c.embeddings_path;
  if (output.empty()) throw ConfigError("no destination: pass --output or set embeddings.path");
  if (fs::exists(output) && sha256_file(output) == c.embeddings_sha256) {
    log_line(output + " already present with the expected checksum");
    return 0;
  }
  if (auto parent = fs::path(output).parent_path(); !parent.empty()) fs::create_directories(parent);
  const std::string partial = output + ".part";
  {
    std::ofstream out(partial, std::ios::binary);
    if (!out) throw Error("cannot write " + partial);
    std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), curl_easy_cleanup);
    if (!curl) throw Error("libcurl initialisation failed");
    curl_easy_setopt(curl.get(), CURLOPT_URL, c.embeddings_url.c_str());
    curl_easy_setopt(curl.get(), CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl.get(), CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, write_chunk);
    curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &out);
    log_line("downloading " + c.embeddings_url);
    if (auto rc = curl_easy_perform(curl.get()); rc != CURLE_OK) {
      fs::remove(partial);
      throw Error(std::string("download failed: ") + curl_easy_strerror(rc));
    }
  }
  const auto got = sha256_file(partial);
  if (got != c.embeddings_sha256) {
    fs::remove(partial);
    throw Error("checksum mismatch: expected " + c.embeddings_sha256 + ", got " + got);
  }
  fs::rename(partial, output);
  log_line("saved " + output);
  return 0;
}
#else
int cmd_fetch(const RunConfig&, const std::string&) {
  throw Error("this build has no download support (libcurl/OpenSSL were not found)");
}
#endif

int cmd_train(const RunConfig& c, const std::string& model_name, const std::string& feature_name) {
  const auto model = parse_model_kind(model_name);
  std::optional<FeatureKind> features;
  if (model != ModelKind::rmdl) {
    if (feature_name.empty()) throw ConfigError("--features is required for " + model_name);
    features = parse_feature_kind(feature_name);
  }
  const auto data = prepare(c, log_line);
  if (features) check_cell(model, *features, data);
  const auto dir = start_run(c);
  const auto outcome = run_cell(data, c, model, features);
  const auto cell_dir = (fs::path(dir) / (to_string(model) + "-" + (features ? to_string(*features) : "both"))).string();
  write_cell(outcome, data, cell_dir);
  print_report(outcome.report);
  for (const auto& w : outcome.warnings) log_line("warning: " + w);
  if (outcome.ensemble) std::printf("\n%s", rmdl::member_table(*outcome.ensemble).c_str());
  std::printf("model written to %s\n", cell_dir.c_str());
  return 0;
}

int cmd_grid(const RunConfig& c) {
  const auto data = prepare(c, log_line);
  const auto dir = start_run(c);
  const auto g = run_grid(data, c, dir, log_line);
  std::printf("%s\n%s", positive_class_note().c_str(), comparison_table(g.reports, TableStyle::plain).c_str());
  if (!g.member_table.empty()) std::printf("\n%s", g.member_table.c_str());
  for (const auto& w : g.warnings) log_line("warning: " + w);
  std::printf("report written to %s\n", dir.c_str());
  bool failed = false;
  for (const auto& r : g.reports) failed |= r.failure.has_value();
  return failed ? 1 : 0;
}

Featurized split_tokens(const PreparedData& data, std::size_t split) {
  return {data.tfidf_tokens[split], data.embedding_tokens[split]};
}

int cmd_evaluate(const RunConfig& c, const std::string& model_path, const std::string& split_name) {
  const std::size_t split = split_name == "test" ? 2 : split_name == "validation" ? 1 : split_name == "train" ? 0 : 3;
  if (split == 3) throw ConfigError("--split must be train, validation or test");
  const auto data = prepare(c, log_line);
  auto model = load_model(model_path, data);
  const auto dir = start_run(c);
  const auto pred = predict_documents(model, data, split_tokens(data, split));
  const auto report = make_report(model.kind, model.features, data.labels[split], pred.labels, 0.0, c.seed);
  const std::vector<EvalReport> one{report};
  write_file((fs::path(dir) / "metrics.csv").string(), metrics_csv(one));
  print_report(report);
  return 0;
}

int cmd_predict(const RunConfig& c, const std::string& model_path, const std::string& input, std::string output) {
  const auto data = prepare(c, log_line);
  auto model = load_model(model_path, data);
  const auto dir = start_run(c);
  const std::string content = read_file(input);
  std::vector<LabeledDocument> docs;
  if (content.find_first_not_of(" \t\r\n") != std::string::npos) {
    auto cols = c.columns;
    cols.label_required = false;
    auto loaded = parse_split(content, input, format_for_path(input), cols);
    if (!loaded.skipped.empty()) log_line("skipped " + std::to_string(loaded.skipped.size()) + " malformed rows");
    for (const auto& s : loaded.skipped) log_line("  line " + std::to_string(s.line) + ": " + s.message);
    docs = std::move(loaded.split.documents);
  }
  const auto pred = predict_documents(model, data, preprocess_documents(c, docs));
  std::string csv = "id,predicted_label,score\n";
  char buf[64];
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::string id = docs[i].id;
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char ch : id) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      id = q + "\"";
    }
    std::snprintf(buf, sizeof buf, "%.6f", pred.scores[i][static_cast<std::size_t>(pred.labels[i])]);
    csv += id + "," + std::string(label_name(pred.labels[i])) + "," + buf + "\n";
  }
  if (output.empty()) output = (fs::path(dir) / "predictions.csv").string();
  write_file(output, csv);
  log_line("wrote " + std::to_string(docs.size()) + " predictions to " + output);
  return 0;
}

int cmd_report(const std::string& run, const std::string& style) {
  const auto reports = parse_metrics_csv(read_file((fs::path(run) / "metrics.csv").string()));
  const auto s = style == "plain" ? TableStyle::plain : TableStyle::markdown;
  if (style != "plain" && style != "markdown") throw ConfigError("--style must be markdown or plain");
  std::printf("%s\n\n%s", positive_class_note().c_str(), comparison_table(reports, s).c_str());
  const auto members = fs::path(run) / "cells" / "rmdl-both" / "members.md";
  if (fs::exists(members)) std::printf("\n%s", read_file(members.string()).c_str());
  for (const auto& w : directional_warnings(reports)) log_line("warning: directional check: " + w);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"COVID-19 misinformation classification workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "override one config key (key=value); repeatable");
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--synthetic", g.synthetic, "use a generated corpus with N training documents");
  app.add_flag("--paper-scale", g.paper_scale, "lift the reduced recurrent sequence length");
  app.add_option("--only", g.only, "comma list of model kinds for the grid");
  app.add_option("--workers", g.workers, "cells trained at once");

  auto* prep = app.add_subcommand("prepare", "preprocess the corpus and build the cache");
  auto* fetch = app.add_subcommand("fetch-embeddings", "download the embedding file and verify its checksum");
  std::string fetch_out;
  fetch->add_option("--output", fetch_out, "destination (default embeddings.path)");

  auto* train = app.add_subcommand("train", "train and evaluate one model");
  std::string model_name, feature_name;
  train->add_option("--model", model_name, "rf, nb, gb, knn, dnn, cnn, gru, lstm or rmdl")->required();
  train->add_option("--features", feature_name, "tfidf or embedding");

  auto* grid = app.add_subcommand("grid", "train every model and featurizer and write the comparison report");

  auto* eval = app.add_subcommand("evaluate", "score a saved model on a prepared split");
  std::string model_path, split_name = "test";
  eval->add_option("--model", model_path, "cell directory, container file or ensemble directory")->required();
  eval->add_option("--split", split_name, "train, validation or test");

  auto* pred = app.add_subcommand("predict", "label documents with a saved model");
  std::string input, output;
  pred->add_option("--model", model_path, "cell directory, container file or ensemble directory")->required();
  pred->add_option("--input", input, "CSV or TSV with id and text columns")->required()->check(CLI::ExistingFile);
  pred->add_option("--output", output, "destination CSV (default: in the run directory)");

  auto* report = app.add_subcommand("report", "render the comparison table of a finished run");
  std::string run_dir, style = "markdown";
  report->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--style", style, "markdown or plain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (report->parsed()) return cmd_report(run_dir, style);
    const auto c = resolve(g);
    if (prep->parsed()) return cmd_prepare(c);
    if (fetch->parsed()) return cmd_fetch(c, fetch_out);
    if (train->parsed()) return cmd_train(c, model_name, feature_name);
    if (grid->parsed()) return cmd_grid(c);
    if (eval->parsed()) return cmd_evaluate(c, model_path, split_name);
    if (pred->parsed()) return cmd_predict(c, model_path, input, output);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
