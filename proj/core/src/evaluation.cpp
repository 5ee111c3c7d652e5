#include "infodemic/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace infodemic {
namespace {

constexpr std::array<ModelKind, 9> kRowOrder{ModelKind::random_forest, ModelKind::multinomial_nb,
                                             ModelKind::gradient_boost, ModelKind::knn,
                                             ModelKind::dnn,           ModelKind::cnn,
                                             ModelKind::rnn_gru,       ModelKind::rnn_lstm,
                                             ModelKind::rmdl};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool center = false) {
  if (s.size() >= width) return s;
  const std::size_t gap = width - s.size();
  const std::size_t left = center ? gap / 2 : 0;
  return std::string(left, ' ') + s + std::string(gap - left, ' ');
}

std::vector<std::string> split_commas(std::string_view line, std::size_t max_fields) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (out.size() + 1 < max_fields) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) break;
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  out.emplace_back(line.substr(start));
  return out;
}

constexpr const char* kMetricsHeader =
    "model,features,accuracy,precision,recall,f1,precision_defined,recall_defined,f1_defined,tp,fp,tn,fn,seed,failure";

}  // namespace

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size())
    throw ShapeError("confusion: " + std::to_string(y_true.size()) + " true labels but " +
                     std::to_string(y_pred.size()) + " predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if ((t != kFake && t != kReal) || (p != kFake && p != kReal))
      throw Error("confusion: labels must be 0 or 1 (row " + std::to_string(i) + ")");
    if (t == kReal) (p == kReal ? cm.tp : cm.fn)++;
    else (p == kReal ? cm.fp : cm.tn)++;
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error("metrics of an empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  m.precision_defined = cm.tp + cm.fp > 0;
  m.recall_defined = cm.tp + cm.fn > 0;
  if (m.precision_defined) m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  if (m.recall_defined) m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  m.f1_defined = m.precision_defined && m.recall_defined && m.precision + m.recall > 0;
  if (m.f1_defined) m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

EvalReport make_report(ModelKind model, std::optional<FeatureKind> features, std::span<const int> y_true,
                       std::span<const int> y_pred, double seconds, std::uint64_t seed) {
  EvalReport r;
  r.model = model;
  r.features = features;
  r.confusion = confusion(y_true, y_pred);
  const auto m = metrics(r.confusion);
  r.accuracy = 100 * m.accuracy;
  r.precision = 100 * m.precision;
  r.recall = 100 * m.recall;
  r.f1 = 100 * m.f1;
  r.precision_defined = m.precision_defined;
  r.recall_defined = m.recall_defined;
  r.f1_defined = m.f1_defined;
  r.seconds = seconds;
  r.seed = seed;
  return r;
}

EvalReport failed_report(ModelKind model, std::optional<FeatureKind> features, std::string reason, std::uint64_t seed) {
  EvalReport r;
  r.model = model;
  r.features = features;
  r.seed = seed;
  std::replace(reason.begin(), reason.end(), '\n', ' ');
  r.failure = std::move(reason);
  return r;
}

std::string positive_class_note() {
  return "Positive class for precision/recall/F1: real (label 1).";
}

std::string comparison_table(std::span<const EvalReport> reports, TableStyle style) {
  // cell key: (row, column); column 2 = ensemble span
  std::map<std::pair<std::size_t, int>, const EvalReport*> cells;
  std::vector<bool> present(kRowOrder.size(), false);
  for (const auto& r : reports) {
    const auto row = static_cast<std::size_t>(std::find(kRowOrder.begin(), kRowOrder.end(), r.model) - kRowOrder.begin());
    const int col = r.model == ModelKind::rmdl || !r.features ? 2 : (*r.features == FeatureKind::tfidf ? 0 : 1);
    cells[{row, col}] = &r;
    present[row] = true;
  }
  double best = -1.0;
  for (const auto& [key, r] : cells)
    if (!r->failure) best = std::max(best, r->accuracy);

  auto cell_text = [&](const EvalReport* r, bool& flagged) -> std::string {
    flagged = false;
    if (!r) return "n/a";
    if (r->failure) return "failed";
    flagged = r->accuracy == best;
    return fixed(r->accuracy, 2);
  };

  const std::string h0 = "Model", h1 = display_name(FeatureKind::tfidf), h2 = display_name(FeatureKind::embedding);
  std::vector<std::array<std::string, 3>> rows;
  std::vector<bool> spans;
  for (std::size_t i = 0; i < kRowOrder.size(); ++i) {
    if (!present[i]) continue;
    const auto kind = kRowOrder[i];
    auto find = [&](int col) -> const EvalReport* {
      auto it = cells.find({i, col});
      return it == cells.end() ? nullptr : it->second;
    };
    std::array<std::string, 3> row{display_name(kind), "", ""};
    bool flag = false;
    if (kind == ModelKind::rmdl) {
      const EvalReport* r = find(2);
      if (!r) r = find(0) ? find(0) : find(1);
      std::string v = cell_text(r, flag);
      if (flag) v = (style == TableStyle::markdown ? "**" + v + "**" : v + " *");
      row[1] = row[2] = v;
      spans.push_back(true);
    } else {
      for (int c = 0; c < 2; ++c) {
        if (kind == ModelKind::multinomial_nb && c == 1) {
          row[2] = "-";
          continue;
        }
        std::string v = cell_text(find(c), flag);
        if (flag) v = (style == TableStyle::markdown ? "**" + v + "**" : v + " *");
        row[static_cast<std::size_t>(c) + 1] = v;
      }
      spans.push_back(false);
    }
    rows.push_back(row);
  }

  std::ostringstream out;
  if (style == TableStyle::markdown) {
    out << "| " << h0 << " | " << h1 << " | " << h2 << " |\n|---|---:|---:|\n";
    bool footnote = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out << "| " << rows[i][0] << " | " << rows[i][1] << " | " << (spans[i] ? rows[i][2] + " †" : rows[i][2]) << " |\n";
      footnote |= spans[i];
    }
    if (footnote) out << "\n† one ensemble value covering both feature columns.\n";
    return out.str();
  }

  std::size_t w0 = h0.size(), w1 = h1.size(), w2 = h2.size();
  for (const auto& r : rows) {
    w0 = std::max(w0, r[0].size());
    w1 = std::max(w1, r[1].size());
    w2 = std::max(w2, r[2].size());
  }
  const std::string rule = std::string(w0, '-') + "-+-" + std::string(w1, '-') + "-+-" + std::string(w2, '-') + "\n";
  out << pad(h0, w0) << " | " << pad(h1, w1) << " | " << pad(h2, w2) << "\n" << rule;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << pad(rows[i][0], w0) << " | ";
    if (spans[i]) out << pad(rows[i][1], w1 + 3 + w2, true);
    else out << pad(rows[i][1], w1) << " | " << pad(rows[i][2], w2);
    out << "\n";
  }
  std::string text = out.str();
  // trailing spaces from padding are noise in diffs
  std::string trimmed;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    line.erase(line.find_last_not_of(' ') + 1);
    trimmed += line + "\n";
  }
  return trimmed;
}

std::string metrics_csv(std::span<const EvalReport> reports) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : reports) {
    out += to_string(r.model) + "," + (r.features ? to_string(*r.features) : "both") + ",";
    out += fixed(r.accuracy, 10) + "," + fixed(r.precision, 10) + "," + fixed(r.recall, 10) + "," + fixed(r.f1, 10) + ",";
    out += std::to_string(r.precision_defined) + "," + std::to_string(r.recall_defined) + "," +
           std::to_string(r.f1_defined) + ",";
    out += std::to_string(r.confusion.tp) + "," + std::to_string(r.confusion.fp) + "," +
           std::to_string(r.confusion.tn) + "," + std::to_string(r.confusion.fn) + ",";
    out += std::to_string(r.seed) + "," + r.failure.value_or("") + "\n";
  }
  return out;
}

std::string timings_csv(std::span<const EvalReport> reports) {
  std::string out = "model,features,seconds\n";
  for (const auto& r : reports)
    out += to_string(r.model) + "," + (r.features ? to_string(*r.features) : "both") + "," + fixed(r.seconds, 3) + "\n";
  return out;
}

std::vector<EvalReport> parse_metrics_csv(std::string_view text) {
  std::vector<EvalReport> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kMetricsHeader) throw ParseError(1, "not a metrics CSV header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_commas(line, 15);
    if (f.size() != 15) throw ParseError(line_no, "expected 15 fields");
    try {
      EvalReport r;
      r.model = parse_model_kind(f[0]);
      if (f[1] != "both") r.features = parse_feature_kind(f[1]);
      r.accuracy = std::stod(f[2]);
      r.precision = std::stod(f[3]);
      r.recall = std::stod(f[4]);
      r.f1 = std::stod(f[5]);
      r.precision_defined = f[6] == "1";
      r.recall_defined = f[7] == "1";
      r.f1_defined = f[8] == "1";
      r.confusion = {std::stoul(f[9]), std::stoul(f[10]), std::stoul(f[11]), std::stoul(f[12])};
      r.seed = std::stoull(f[13]);
      if (!f[14].empty()) r.failure = f[14];
      out.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ParseError(line_no, std::string("bad number: ") + e.what());
    }
  }
  return out;
}

std::vector<std::pair<std::string, double>> top_features(const Classifier& model, const Vocabulary& vocab,
                                                         std::size_t k) {
  const auto imp = model.feature_importances();
  if (!imp) throw ConfigError(display_name(model.kind()) + " does not expose feature importances");
  if (model.feature_kind() != FeatureKind::tfidf)
    throw ConfigError("feature importances map to terms only for TF-IDF models");
  if (imp->size() != vocab.size())
    throw ShapeError("model has " + std::to_string(imp->size()) + " features but the vocabulary has " +
                     std::to_string(vocab.size()) + " terms");
  std::vector<std::size_t> order(imp->size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return (*imp)[a] > (*imp)[b]; });
  order.resize(std::min(k, order.size()));
  std::vector<std::pair<std::string, double>> out;
  for (auto i : order) out.emplace_back(vocab.terms()[i], (*imp)[i]);
  return out;
}

}  // namespace infodemic
