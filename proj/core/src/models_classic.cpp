#include "infodemic/models_classic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "infodemic/corpus.hpp"

namespace infodemic {
namespace {

using Json = nlohmann::json;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logistic_loss(const std::vector<double>& score, const std::vector<int>& y) {
  double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) total += y[i] == kReal ? softplus(-score[i]) : softplus(score[i]);
  return total / static_cast<double>(y.size());
}

// ---------------------------------------------------------------- CART

enum class Criterion { gini, squared_error };

struct TreeParams {
  Criterion criterion = Criterion::gini;
  std::size_t max_depth = 0;
  std::size_t min_leaf = 1;
  std::size_t max_features = 0;  // 0: all
};

// n: distinct rows, w: total weight, a: weighted class-1 count or weighted target sum
struct Stats {
  double n = 0, w = 0, a = 0;
  void add(const Stats& o) {
    n += o.n;
    w += o.w;
    a += o.a;
  }
  Stats minus(const Stats& o) const { return {n - o.n, w - o.w, a - o.a}; }
};

struct Entry {
  std::uint32_t feature;
  double value;
  std::uint32_t row;
};

class TreeBuilder {
 public:
  using LeafFn = std::function<double(std::span<const std::uint32_t>)>;

  TreeBuilder(const SparseMatrix& x, const std::vector<double>& target, const std::vector<double>& weight,
              TreeParams params, Rng& rng, LeafFn leaf)
      : x_(x), target_(target), weight_(weight), p_(params), rng_(rng), leaf_(std::move(leaf)),
        stamp_(x.cols(), 0), count_(x.cols(), 0), lo_(x.cols()), hi_(x.cols()), chosen_(x.cols(), 0) {}

  DecisionTree build() {
    std::vector<std::uint32_t> rows;
    for (std::uint32_t r = 0; r < x_.rows(); ++r)
      if (weight_[r] > 0) rows.push_back(r);
    struct Work {
      std::int32_t node;
      std::vector<std::uint32_t> rows;
      std::size_t depth;
    };
    std::vector<Work> stack;
    stack.push_back({new_node(), std::move(rows), 0});
    while (!stack.empty()) {
      Work w = std::move(stack.back());
      stack.pop_back();
      auto split = find_split(w.rows, w.depth);
      if (!split) {
        tree_.value[w.node] = leaf_(w.rows);
        continue;
      }
      std::vector<std::uint32_t> left, right;
      for (auto r : w.rows) (x_.at(r, split->feature) <= split->threshold ? left : right).push_back(r);
      tree_.feature[w.node] = static_cast<std::int32_t>(split->feature);
      tree_.threshold[w.node] = split->threshold;
      tree_.gain[w.node] = split->gain;
      const auto l = new_node();
      const auto rnode = new_node();
      tree_.left[w.node] = l;
      tree_.right[w.node] = rnode;
      // right first so the left subtree is numbered first
      stack.push_back({rnode, std::move(right), w.depth + 1});
      stack.push_back({l, std::move(left), w.depth + 1});
    }
    return std::move(tree_);
  }

 private:
  struct Split {
    std::uint32_t feature;
    double threshold;
    double gain;
  };

  const SparseMatrix& x_;
  const std::vector<double>& target_;
  const std::vector<double>& weight_;
  TreeParams p_;
  Rng& rng_;
  LeafFn leaf_;
  DecisionTree tree_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::uint32_t> count_;
  std::vector<double> lo_, hi_;
  std::vector<std::uint32_t> chosen_;
  std::uint32_t epoch_ = 0;

  std::int32_t new_node() {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(0.0);
    tree_.gain.push_back(0.0);
    return static_cast<std::int32_t>(tree_.feature.size() - 1);
  }

  // Weighted impurity (impurity times weight); lower is better.
  double cost(const Stats& s) const {
    if (s.w <= 0) return 0.0;
    if (p_.criterion == Criterion::gini) return 2.0 * s.a * (s.w - s.a) / s.w;
    return -s.a * s.a / s.w;
  }

  std::optional<Split> find_split(const std::vector<std::uint32_t>& rows, std::size_t depth) {
    Stats total;
    double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
    for (auto r : rows) {
      total.add({1.0, weight_[r], weight_[r] * target_[r]});
      tmin = std::min(tmin, target_[r]);
      tmax = std::max(tmax, target_[r]);
    }
    if (tmin == tmax) return std::nullopt;  // pure node
    if (p_.max_depth && depth >= p_.max_depth) return std::nullopt;
    if (total.n < 2.0 * static_cast<double>(p_.min_leaf)) return std::nullopt;

    // Features that take more than one value inside this node.
    const std::uint32_t e = ++epoch_;
    std::vector<std::uint32_t> seen;
    for (auto r : rows) {
      for (const auto& en : x_.row(r)) {
        const auto f = en.index;
        if (stamp_[f] != e) {
          stamp_[f] = e;
          count_[f] = 0;
          lo_[f] = hi_[f] = en.weight;
          seen.push_back(f);
        }
        ++count_[f];
        lo_[f] = std::min(lo_[f], en.weight);
        hi_[f] = std::max(hi_[f], en.weight);
      }
    }
    std::vector<std::uint32_t> candidates;
    for (auto f : seen) {
      const bool has_implicit_zero = count_[f] < rows.size();
      const bool varies = lo_[f] != hi_[f] || (has_implicit_zero && (lo_[f] != 0.0 || hi_[f] != 0.0));
      if (varies) candidates.push_back(f);
    }
    if (candidates.empty()) return std::nullopt;
    std::sort(candidates.begin(), candidates.end());
    if (p_.max_features && p_.max_features < candidates.size()) {
      // A uniform random permutation of all features restricted to the
      // non-constant ones is a uniform permutation of those.
      for (std::size_t i = 0; i < p_.max_features; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
        std::swap(candidates[i], candidates[pick(rng_)]);
      }
      candidates.resize(p_.max_features);
      std::sort(candidates.begin(), candidates.end());
    }
    for (auto f : candidates) chosen_[f] = e;

    std::vector<Entry> entries;
    for (auto r : rows)
      for (const auto& en : x_.row(r))
        if (chosen_[en.index] == e) entries.push_back({en.index, en.weight, r});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.feature != b.feature) return a.feature < b.feature;
      if (a.value != b.value) return a.value < b.value;
      return a.row < b.row;
    });

    const double parent_cost = cost(total);
    const double tie_eps = 1e-12 * std::max(1.0, std::abs(parent_cost));
    std::optional<Split> best;
    struct Group {
      double value;
      Stats stats;
    };
    std::vector<Group> groups;
    std::size_t i = 0;
    while (i < entries.size()) {
      const auto f = entries[i].feature;
      std::size_t j = i;
      Stats explicit_stats;
      while (j < entries.size() && entries[j].feature == f) {
        const auto r = entries[j].row;
        explicit_stats.add({1.0, weight_[r], weight_[r] * target_[r]});
        ++j;
      }
      const Stats zeros = total.minus(explicit_stats);
      groups.clear();
      bool zero_placed = zeros.n == 0;
      for (std::size_t k = i; k < j; ++k) {
        const double v = entries[k].value;
        if (!zero_placed && v >= 0.0) {
          groups.push_back({0.0, zeros});
          zero_placed = true;
        }
        const auto r = entries[k].row;
        const Stats s{1.0, weight_[r], weight_[r] * target_[r]};
        if (!groups.empty() && groups.back().value == v)
          groups.back().stats.add(s);
        else
          groups.push_back({v, s});
      }
      if (!zero_placed) groups.push_back({0.0, zeros});

      Stats left;
      for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
        left.add(groups[g].stats);
        const Stats right = total.minus(left);
        if (left.n < static_cast<double>(p_.min_leaf) || right.n < static_cast<double>(p_.min_leaf)) continue;
        const double gain = parent_cost - cost(left) - cost(right);
        // a gain must beat the incumbent by more than rounding noise, so exact
        // ties resolve to the lower feature index, then the lower threshold
        if (!best || gain > best->gain + tie_eps) {
          double thr = 0.5 * (groups[g].value + groups[g + 1].value);
          if (thr >= groups[g + 1].value) thr = groups[g].value;
          best = Split{f, thr, gain};
        }
      }
      i = j;
    }
    return best;
  }
};

std::vector<double> tree_importances(const std::vector<DecisionTree>& trees, std::size_t dim) {
  std::vector<double> total(dim, 0.0);
  if (trees.empty()) return total;
  std::vector<double> one(dim);
  for (const auto& t : trees) {
    std::fill(one.begin(), one.end(), 0.0);
    double sum = 0;
    for (std::size_t n = 0; n < t.size(); ++n) {
      if (t.feature[n] < 0) continue;
      const double g = std::max(0.0, t.gain[n]);
      one[static_cast<std::size_t>(t.feature[n])] += g;
      sum += g;
    }
    if (sum > 0)
      for (std::size_t f = 0; f < dim; ++f) total[f] += one[f] / sum;
  }
  for (auto& v : total) v /= static_cast<double>(trees.size());
  return total;
}

void store_trees(const std::vector<DecisionTree>& trees, const std::string& prefix, std::vector<StoredTensor>& out) {
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const auto& tr = trees[t];
    const std::string p = prefix + std::to_string(t) + ".";
    const nn::Shape shape{tr.size()};
    auto ints = [](const std::vector<std::int32_t>& v) { return std::vector<double>(v.begin(), v.end()); };
    out.push_back({p + "feature", DType::i32, shape, ints(tr.feature)});
    out.push_back({p + "threshold", DType::f64, shape, tr.threshold});
    out.push_back({p + "left", DType::i32, shape, ints(tr.left)});
    out.push_back({p + "right", DType::i32, shape, ints(tr.right)});
    out.push_back({p + "value", DType::f64, shape, tr.value});
    out.push_back({p + "gain", DType::f64, shape, tr.gain});
  }
}

std::vector<DecisionTree> restore_trees(const ModelContainer& c, const std::string& prefix, std::size_t count,
                                        std::size_t dim) {
  std::vector<DecisionTree> trees(count);
  for (std::size_t t = 0; t < count; ++t) {
    const std::string p = prefix + std::to_string(t) + ".";
    auto ints = [](const StoredTensor& s) {
      std::vector<std::int32_t> v;
      for (double d : s.values) v.push_back(static_cast<std::int32_t>(d));
      return v;
    };
    auto& tr = trees[t];
    tr.feature = ints(c.tensor(p + "feature"));
    tr.threshold = c.tensor(p + "threshold").values;
    tr.left = ints(c.tensor(p + "left"));
    tr.right = ints(c.tensor(p + "right"));
    tr.value = c.tensor(p + "value").values;
    tr.gain = c.tensor(p + "gain").values;
    const auto n = static_cast<std::int32_t>(tr.size());
    if (tr.threshold.size() != tr.size() || tr.left.size() != tr.size() || tr.right.size() != tr.size() ||
        tr.value.size() != tr.size() || tr.gain.size() != tr.size())
      throw Error("stored tree " + p + " has inconsistent node arrays");
    for (std::int32_t k = 0; k < n; ++k) {
      if (tr.feature[k] < 0) continue;
      if (static_cast<std::size_t>(tr.feature[k]) >= dim || tr.left[k] <= k || tr.left[k] >= n || tr.right[k] <= k ||
          tr.right[k] >= n)
        throw Error("stored tree " + p + " is malformed at node " + std::to_string(k));
    }
  }
  return trees;
}

std::size_t default_max_features(std::size_t d) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
}

Json hp_to_json(const ClassicHyperparameters& hp) {
  Json j{{"nb_alpha", hp.nb_alpha},
         {"knn_k", hp.knn_k},
         {"rf_trees", hp.rf_trees},
         {"rf_min_leaf", hp.rf_min_leaf},
         {"rf_max_features", hp.rf_max_features},
         {"rf_max_depth", hp.rf_max_depth},
         {"gb_estimators", hp.gb_estimators},
         {"gb_learning_rate", hp.gb_learning_rate},
         {"gb_max_depth", hp.gb_max_depth}};
  if (hp.knn_metric) j["knn_metric"] = *hp.knn_metric == DistanceMetric::cosine ? "cosine" : "euclidean";
  return j;
}

ClassicHyperparameters hp_from_json(const Json& j) {
  ClassicHyperparameters hp;
  hp.nb_alpha = j.at("nb_alpha").get<double>();
  hp.knn_k = j.at("knn_k").get<std::size_t>();
  hp.rf_trees = j.at("rf_trees").get<std::size_t>();
  hp.rf_min_leaf = j.at("rf_min_leaf").get<std::size_t>();
  hp.rf_max_features = j.at("rf_max_features").get<std::size_t>();
  hp.rf_max_depth = j.at("rf_max_depth").get<std::size_t>();
  hp.gb_estimators = j.at("gb_estimators").get<std::size_t>();
  hp.gb_learning_rate = j.at("gb_learning_rate").get<double>();
  hp.gb_max_depth = j.at("gb_max_depth").get<std::size_t>();
  if (j.contains("knn_metric"))
    hp.knn_metric = j["knn_metric"] == "cosine" ? DistanceMetric::cosine : DistanceMetric::euclidean;
  return hp;
}

void check_labels(const SparseMatrix& x, const std::vector<int>& y) {
  if (x.rows() == 0) throw Error("cannot fit on an empty training set");
  if (y.size() != x.rows())
    throw ShapeError("got " + std::to_string(y.size()) + " labels for " + std::to_string(x.rows()) + " rows");
  for (int l : y)
    if (l != kFake && l != kReal) throw Error("label " + std::to_string(l) + " is not 0 (fake) or 1 (real)");
}

std::array<std::size_t, 2> class_counts(const std::vector<int>& y) {
  std::array<std::size_t, 2> c{0, 0};
  for (int l : y) ++c[static_cast<std::size_t>(l)];
  return c;
}

}  // namespace

// ---------------------------------------------------------------- trees

std::size_t DecisionTree::depth() const {
  if (feature.empty()) return 0;
  std::vector<std::size_t> d(size(), 0);
  std::size_t best = 0;
  for (std::size_t n = 0; n < size(); ++n) {
    best = std::max(best, d[n]);
    if (feature[n] >= 0) {
      d[static_cast<std::size_t>(left[n])] = d[n] + 1;
      d[static_cast<std::size_t>(right[n])] = d[n] + 1;
    }
  }
  return best;
}

double DecisionTree::evaluate(std::span<const SparseEntry> row) const {
  std::size_t n = 0;
  while (feature[n] >= 0) {
    const auto f = static_cast<std::uint32_t>(feature[n]);
    auto it = std::lower_bound(row.begin(), row.end(), f,
                               [](const SparseEntry& e, std::uint32_t idx) { return e.index < idx; });
    const double v = (it != row.end() && it->index == f) ? it->weight : 0.0;
    n = static_cast<std::size_t>(v <= threshold[n] ? left[n] : right[n]);
  }
  return value[n];
}

std::vector<std::uint32_t> bootstrap_counts(std::size_t n, Rng& rng) {
  std::vector<std::uint32_t> counts(n, 0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t i = 0; i < n; ++i) ++counts[pick(rng)];
  return counts;
}

// ---------------------------------------------------------------- base

FitReport Classifier::fit(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t seed) {
  check_labels(x, y);
  FitReport report;
  report.model = kind();
  report.features = features_;
  report.seed = seed;
  dimension_ = x.cols();
  describe(report);
  const auto start = std::chrono::steady_clock::now();
  fit_impl(x, y, seed, report);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

Prediction Classifier::predict(const SparseMatrix& x) const {
  if (dimension_ == 0) throw Error(to_string(kind()) + " model has not been fitted");
  if (x.cols() != dimension_)
    throw ShapeError(to_string(kind()) + " model was fitted on " + std::to_string(dimension_) +
                     " features but got " + std::to_string(x.cols()));
  return predict_impl(x);
}

ModelContainer Classifier::to_container(std::uint64_t vocabulary_hash, std::uint64_t pipeline_hash) const {
  ModelContainer c;
  Json arch{{"kind", to_string(kind())},
            {"features", to_string(features_)},
            {"dimension", dimension_},
            {"hyperparameters", hp_to_json(hp_)}};
  c.architecture = arch.dump();
  c.vocabulary_hash = vocabulary_hash;
  c.pipeline_hash = pipeline_hash;
  save_tensors(c.tensors);
  return c;
}

std::unique_ptr<Classifier> make_classifier(ModelKind kind, FeatureKind features, ClassicHyperparameters hp) {
  switch (kind) {
    case ModelKind::multinomial_nb:
      if (features != FeatureKind::tfidf)
        throw ConfigError(
            "multinomial naive Bayes needs non-negative feature values; word-embedding features can be negative");
      if (!(hp.nb_alpha > 0)) throw ConfigError("nb_alpha must be positive");
      return std::make_unique<MultinomialNB>(hp);
    case ModelKind::knn:
      if (hp.knn_k == 0) throw ConfigError("knn_k must be at least 1");
      return std::make_unique<KNearestNeighbors>(features, hp);
    case ModelKind::random_forest:
      if (hp.rf_trees == 0) throw ConfigError("rf_trees must be at least 1");
      if (hp.rf_min_leaf == 0) throw ConfigError("rf_min_leaf must be at least 1");
      return std::make_unique<RandomForest>(features, hp);
    case ModelKind::gradient_boost:
      if (hp.gb_estimators == 0) throw ConfigError("gb_estimators must be at least 1");
      if (!(hp.gb_learning_rate > 0)) throw ConfigError("gb_learning_rate must be positive");
      if (hp.gb_max_depth == 0) throw ConfigError("gb_max_depth must be at least 1");
      return std::make_unique<GradientBoosting>(features, hp);
    default:
      throw ConfigError(to_string(kind) + " is not a conventional classifier");
  }
}

std::unique_ptr<Classifier> load_classifier(const ModelContainer& container) {
  Json arch;
  try {
    arch = Json::parse(container.architecture);
  } catch (const Json::exception& e) {
    throw Error(std::string("model architecture is not valid JSON: ") + e.what());
  }
  try {
    auto model = make_classifier(parse_model_kind(arch.at("kind").get<std::string>()),
                                 parse_feature_kind(arch.at("features").get<std::string>()),
                                 hp_from_json(arch.at("hyperparameters")));
    model->dimension_ = arch.at("dimension").get<std::size_t>();
    model->load_tensors(container);
    return model;
  } catch (const Json::exception& e) {
    throw Error(std::string("model architecture is incomplete: ") + e.what());
  }
}

// ---------------------------------------------------------------- naive Bayes

void MultinomialNB::describe(FitReport& r) const {
  r.hyperparameters["alpha"] = fmt_double(hp_.nb_alpha);
  r.assumptions.push_back("alpha=" + fmt_double(hp_.nb_alpha) + " (Laplace smoothing, assumed)");
  r.assumptions.push_back("TF-IDF weights used directly as fractional counts");
}

void MultinomialNB::fit_impl(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t, FitReport& report) {
  if (x.min_value() < 0.0)
    throw ConfigError(
        "multinomial naive Bayes requires non-negative features (conditional probabilities are non-negative); "
        "found a negative value");
  const auto counts = class_counts(y);
  const double n = static_cast<double>(y.size());
  std::array<std::vector<double>, 2> fc{std::vector<double>(dimension_, 0.0), std::vector<double>(dimension_, 0.0)};
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (const auto& e : x.row(r)) fc[static_cast<std::size_t>(y[r])][e.index] += e.weight;
  for (std::size_t c = 0; c < 2; ++c) {
    if (counts[c] == 0) report.warnings.push_back("no training rows of class " + std::string(label_name(static_cast<int>(c))));
    log_prior_[c] = counts[c] ? std::log(static_cast<double>(counts[c]) / n) : -std::numeric_limits<double>::infinity();
    const double total = std::accumulate(fc[c].begin(), fc[c].end(), 0.0) + hp_.nb_alpha * static_cast<double>(dimension_);
    log_likelihood_[c].resize(dimension_);
    for (std::size_t f = 0; f < dimension_; ++f) log_likelihood_[c][f] = std::log((fc[c][f] + hp_.nb_alpha) / total);
  }
}

Prediction MultinomialNB::predict_impl(const SparseMatrix& x) const {
  if (x.min_value() < 0.0)
    throw ConfigError("multinomial naive Bayes requires non-negative features; found a negative value");
  Prediction out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::array<double, 2> jll = log_prior_;
    for (const auto& e : x.row(r))
      for (std::size_t c = 0; c < 2; ++c) jll[c] += e.weight * log_likelihood_[c][e.index];
    const double m = std::max(jll[0], jll[1]);
    const double e0 = std::exp(jll[0] - m), e1 = std::exp(jll[1] - m);
    std::array<double, 2> p{e0 / (e0 + e1), e1 / (e0 + e1)};
    out.labels.push_back(jll[1] > jll[0] ? kReal : kFake);
    out.scores.push_back(p);
  }
  return out;
}

std::optional<std::vector<double>> MultinomialNB::feature_importances() const {
  std::vector<double> v(dimension_);
  for (std::size_t f = 0; f < dimension_; ++f) v[f] = std::abs(log_likelihood_[1][f] - log_likelihood_[0][f]);
  return v;
}

void MultinomialNB::save_tensors(std::vector<StoredTensor>& out) const {
  out.push_back({"log_prior", DType::f64, {2}, {log_prior_[0], log_prior_[1]}});
  std::vector<double> ll = log_likelihood_[0];
  ll.insert(ll.end(), log_likelihood_[1].begin(), log_likelihood_[1].end());
  out.push_back({"log_likelihood", DType::f64, {2, dimension_}, std::move(ll)});
}

void MultinomialNB::load_tensors(const ModelContainer& c) {
  const auto& prior = c.tensor("log_prior");
  const auto& ll = c.tensor("log_likelihood");
  if (prior.values.size() != 2 || ll.shape != nn::Shape{2, dimension_}) throw Error("naive Bayes tables have the wrong shape");
  log_prior_ = {prior.values[0], prior.values[1]};
  log_likelihood_[0].assign(ll.values.begin(), ll.values.begin() + static_cast<std::ptrdiff_t>(dimension_));
  log_likelihood_[1].assign(ll.values.begin() + static_cast<std::ptrdiff_t>(dimension_), ll.values.end());
}

// ---------------------------------------------------------------- KNN

DistanceMetric KNearestNeighbors::metric() const noexcept {
  if (hp_.knn_metric) return *hp_.knn_metric;
  return features_ == FeatureKind::tfidf ? DistanceMetric::cosine : DistanceMetric::euclidean;
}

void KNearestNeighbors::describe(FitReport& r) const {
  r.hyperparameters["k"] = std::to_string(hp_.knn_k);
  const std::string m = metric() == DistanceMetric::cosine ? "cosine" : "euclidean";
  r.hyperparameters["metric"] = m;
  r.assumptions.push_back("metric=" + m + " (assumed)");
  r.assumptions.push_back("even-k ties go to the nearest neighbour's label");
}

void KNearestNeighbors::fit_impl(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t, FitReport&) {
  if (hp_.knn_k > x.rows())
    throw ConfigError("knn_k=" + std::to_string(hp_.knn_k) + " exceeds the " + std::to_string(x.rows()) +
                      " training rows");
  train_ = x;
  labels_ = y;
}

Prediction KNearestNeighbors::predict_impl(const SparseMatrix& x) const {
  const bool cosine = metric() == DistanceMetric::cosine;
  const std::size_t n = train_.rows(), k = hp_.knn_k;
  auto sq_norm = [](std::span<const SparseEntry> row) {
    double s = 0;
    for (const auto& e : row) s += e.weight * e.weight;
    return s;
  };
  std::vector<double> train_norm(n);
  for (std::size_t t = 0; t < n; ++t) train_norm[t] = std::sqrt(sq_norm(train_.row(t)));

  Prediction out;
  std::vector<std::pair<double, std::uint32_t>> dist(n);
  for (std::size_t q = 0; q < x.rows(); ++q) {
    const auto qrow = x.row(q);
    const double qnorm = std::sqrt(sq_norm(qrow));
    for (std::size_t t = 0; t < n; ++t) {
      const auto trow = train_.row(t);
      double dot = 0, sq = 0;
      std::size_t i = 0, j = 0;
      while (i < qrow.size() || j < trow.size()) {
        if (j == trow.size() || (i < qrow.size() && qrow[i].index < trow[j].index)) {
          sq += qrow[i].weight * qrow[i].weight;
          ++i;
        } else if (i == qrow.size() || trow[j].index < qrow[i].index) {
          sq += trow[j].weight * trow[j].weight;
          ++j;
        } else {
          const double d = qrow[i].weight - trow[j].weight;
          dot += qrow[i].weight * trow[j].weight;
          sq += d * d;
          ++i;
          ++j;
        }
      }
      double d;
      if (cosine)
        d = (qnorm > 0 && train_norm[t] > 0) ? 1.0 - dot / (qnorm * train_norm[t]) : 1.0;
      else
        d = sq;
      dist[t] = {d, static_cast<std::uint32_t>(t)};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::size_t real = 0;
    for (std::size_t i = 0; i < k; ++i) real += labels_[dist[i].second] == kReal;
    int label;
    if (2 * real > k)
      label = kReal;
    else if (2 * real < k)
      label = kFake;
    else
      label = labels_[dist[0].second];
    const double frac = static_cast<double>(real) / static_cast<double>(k);
    out.labels.push_back(label);
    out.scores.push_back({1.0 - frac, frac});
  }
  return out;
}

void KNearestNeighbors::save_tensors(std::vector<StoredTensor>& out) const {
  std::vector<double> ptr{0}, idx, val;
  for (std::size_t r = 0; r < train_.rows(); ++r) {
    for (const auto& e : train_.row(r)) {
      idx.push_back(e.index);
      val.push_back(e.weight);
    }
    ptr.push_back(static_cast<double>(idx.size()));
  }
  out.push_back({"train.row_ptr", DType::i32, {ptr.size()}, std::move(ptr)});
  out.push_back({"train.indices", DType::i32, {idx.size()}, std::move(idx)});
  out.push_back({"train.values", DType::f64, {val.size()}, std::move(val)});
  out.push_back({"train.labels", DType::i32, {labels_.size()}, std::vector<double>(labels_.begin(), labels_.end())});
}

void KNearestNeighbors::load_tensors(const ModelContainer& c) {
  const auto& ptr = c.tensor("train.row_ptr").values;
  const auto& idx = c.tensor("train.indices").values;
  const auto& val = c.tensor("train.values").values;
  const auto& lab = c.tensor("train.labels").values;
  if (ptr.empty() || idx.size() != val.size() || lab.size() + 1 != ptr.size())
    throw Error("stored KNN training set is inconsistent");
  train_ = SparseMatrix(dimension_);
  for (std::size_t r = 0; r + 1 < ptr.size(); ++r) {
    std::vector<SparseEntry> row;
    const auto b = static_cast<std::size_t>(ptr[r]), e = static_cast<std::size_t>(ptr[r + 1]);
    if (b > e || e > idx.size()) throw Error("stored KNN training set is inconsistent");
    for (std::size_t i = b; i < e; ++i) row.push_back({static_cast<std::uint32_t>(idx[i]), val[i]});
    train_.append_row(row);
  }
  labels_.assign(lab.begin(), lab.end());
}

// ---------------------------------------------------------------- random forest

void RandomForest::describe(FitReport& r) const {
  r.hyperparameters["n_trees"] = std::to_string(hp_.rf_trees);
  r.hyperparameters["min_leaf"] = std::to_string(hp_.rf_min_leaf);
  r.hyperparameters["max_features"] =
      hp_.rf_max_features ? std::to_string(hp_.rf_max_features) : "sqrt(d)=" + std::to_string(default_max_features(dimension_));
  r.hyperparameters["max_depth"] = hp_.rf_max_depth ? std::to_string(hp_.rf_max_depth) : "unlimited";
  r.hyperparameters["criterion"] = "gini";
  r.assumptions.push_back("min_leaf=1 and no depth cap (assumed)");
  r.assumptions.push_back("a tied vote goes to label 0 (fake)");
}

void RandomForest::fit_impl(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t seed, FitReport& report) {
  const auto counts = class_counts(y);
  if (counts[0] == 0 || counts[1] == 0)
    report.warnings.push_back("training data has a single class; every tree is a constant leaf");
  const std::vector<double> target(y.begin(), y.end());
  TreeParams params{Criterion::gini, hp_.rf_max_depth, hp_.rf_min_leaf,
                    hp_.rf_max_features ? hp_.rf_max_features : default_max_features(dimension_)};
  trees_.assign(hp_.rf_trees, {});
  auto grow = [&](std::size_t t) {
    Rng rng(tree_seed(seed, t));
    const auto in_bag = bootstrap_counts(x.rows(), rng);
    const std::vector<double> weight(in_bag.begin(), in_bag.end());
    TreeBuilder builder(x, target, weight, params, rng, [&](std::span<const std::uint32_t> rows) {
      double w = 0, a = 0;
      for (auto r : rows) {
        w += weight[r];
        a += weight[r] * target[r];
      }
      return a > w - a ? 1.0 : 0.0;
    });
    trees_[t] = builder.build();
  };
  const std::size_t workers = std::clamp<std::size_t>(hp_.workers, 1, hp_.rf_trees);
  if (workers == 1) {
    for (std::size_t t = 0; t < hp_.rf_trees; ++t) grow(t);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < hp_.rf_trees; t += workers) grow(t);
      });
    for (auto& th : pool) th.join();
  }
}

Prediction RandomForest::predict_impl(const SparseMatrix& x) const {
  Prediction out;
  const double n = static_cast<double>(trees_.size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::size_t real = 0;
    for (const auto& t : trees_) real += t.evaluate(x.row(r)) == 1.0;
    const double frac = static_cast<double>(real) / n;
    out.labels.push_back(2 * real > trees_.size() ? kReal : kFake);
    out.scores.push_back({1.0 - frac, frac});
  }
  return out;
}

std::optional<std::vector<double>> RandomForest::feature_importances() const {
  return tree_importances(trees_, dimension_);
}

void RandomForest::save_tensors(std::vector<StoredTensor>& out) const { store_trees(trees_, "tree", out); }
void RandomForest::load_tensors(const ModelContainer& c) { trees_ = restore_trees(c, "tree", hp_.rf_trees, dimension_); }

// ---------------------------------------------------------------- gradient boosting

void GradientBoosting::describe(FitReport& r) const {
  r.hyperparameters["n_estimators"] = std::to_string(hp_.gb_estimators);
  r.hyperparameters["learning_rate"] = fmt_double(hp_.gb_learning_rate);
  r.hyperparameters["max_depth"] = std::to_string(hp_.gb_max_depth);
  r.hyperparameters["loss"] = "logistic";
  r.assumptions.push_back("learning_rate=" + fmt_double(hp_.gb_learning_rate) + ", max_depth=" +
                          std::to_string(hp_.gb_max_depth) + " (assumed)");
  r.assumptions.push_back("\"100 estimators\" and \"100 epochs\" read as one setting");
}

void GradientBoosting::fit_impl(const SparseMatrix& x, const std::vector<int>& y, std::uint64_t, FitReport& report) {
  const auto counts = class_counts(y);
  const double n = static_cast<double>(y.size());
  stages_.clear();
  train_loss_.clear();
  if (counts[0] == 0 || counts[1] == 0) {
    // log-odds of a clamped prior keeps the constant model finite
    const double p = std::clamp(static_cast<double>(counts[1]) / n, 1e-12, 1.0 - 1e-12);
    prior_ = std::log(p / (1.0 - p));
    report.warnings.push_back("training data has a single class; model is the constant prior log-odds");
    train_loss_.push_back(logistic_loss(std::vector<double>(y.size(), prior_), y));
    return;
  }
  const double p = static_cast<double>(counts[1]) / n;
  prior_ = std::log(p / (1.0 - p));
  std::vector<double> score(y.size(), prior_), residual(y.size()), hess(y.size());
  const std::vector<double> weight(y.size(), 1.0);
  train_loss_.push_back(logistic_loss(score, y));
  Rng rng(0);  // unused: every stage considers all features
  for (std::size_t m = 0; m < hp_.gb_estimators; ++m) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double pi = sigmoid(score[i]);
      residual[i] = static_cast<double>(y[i]) - pi;
      hess[i] = pi * (1.0 - pi);
    }
    TreeParams params{Criterion::squared_error, hp_.gb_max_depth, 1, 0};
    TreeBuilder builder(x, residual, weight, params, rng, [&](std::span<const std::uint32_t> rows) {
      double num = 0, den = 0;
      for (auto r : rows) {
        num += residual[r];
        den += hess[r];
      }
      return std::abs(den) < 1e-150 ? 0.0 : num / den;
    });
    stages_.push_back(builder.build());
    for (std::size_t i = 0; i < y.size(); ++i) score[i] += hp_.gb_learning_rate * stages_.back().evaluate(x.row(i));
    train_loss_.push_back(logistic_loss(score, y));
  }
}

std::vector<double> GradientBoosting::decision_function(const SparseMatrix& x) const {
  if (x.cols() != dimension_) throw ShapeError("gradient boosting input has the wrong dimension");
  std::vector<double> out(x.rows(), prior_);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (const auto& t : stages_) out[r] += hp_.gb_learning_rate * t.evaluate(x.row(r));
  return out;
}

Prediction GradientBoosting::predict_impl(const SparseMatrix& x) const {
  Prediction out;
  for (double s : decision_function(x)) {
    const double p = sigmoid(s);
    out.labels.push_back(p > 0.5 ? kReal : kFake);
    out.scores.push_back({1.0 - p, p});
  }
  return out;
}

std::optional<std::vector<double>> GradientBoosting::feature_importances() const {
  return tree_importances(stages_, dimension_);
}

void GradientBoosting::save_tensors(std::vector<StoredTensor>& out) const {
  out.push_back({"prior_log_odds", DType::f64, {1}, {prior_}});
  out.push_back({"stage_count", DType::i32, {1}, {static_cast<double>(stages_.size())}});
  store_trees(stages_, "stage", out);
}

void GradientBoosting::load_tensors(const ModelContainer& c) {
  prior_ = c.tensor("prior_log_odds").values.at(0);
  const auto count = static_cast<std::size_t>(c.tensor("stage_count").values.at(0));
  stages_ = restore_trees(c, "stage", count, dimension_);
}

}  // namespace infodemic
