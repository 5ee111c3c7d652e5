#include "infodemic/nn/gradcheck.hpp"

#include <cmath>
#include <map>

#include "infodemic/nn/optim.hpp"

namespace infodemic::nn {
namespace {

double evaluate(const LossFn& loss) {
  Graph g;
  return loss(g).value().data.at(0);
}

}  // namespace

GradCheckReport grad_check(std::span<Parameter* const> params, const LossFn& loss, double epsilon,
                           double tolerance) {
  zero_grads(params);
  {
    Graph g;
    Tensor l = loss(g);
    g.backward(l);
  }
  GradCheckReport report;
  report.tolerance = tolerance;
  std::map<std::string, LayerGradError> by_layer;
  std::vector<std::string> order;
  for (auto* p : params) {
    double diff_sq = 0.0, analytic_sq = 0.0, numeric_sq = 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + epsilon;
      const double up = evaluate(loss);
      p->value.data[i] = saved - epsilon;
      const double down = evaluate(loss);
      p->value.data[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = p->grad.data[i];
      diff_sq += (analytic - numeric) * (analytic - numeric);
      analytic_sq += analytic * analytic;
      numeric_sq += numeric * numeric;
    }
    const double denom = std::sqrt(analytic_sq) + std::sqrt(numeric_sq);
    const double rel = denom > 0.0 ? std::sqrt(diff_sq) / denom : 0.0;

    const auto dot = p->name.find_last_of('.');
    const std::string layer = dot == std::string::npos ? p->name : p->name.substr(0, dot);
    auto [it, inserted] = by_layer.try_emplace(layer, LayerGradError{layer, 0.0, 0});
    if (inserted) order.push_back(layer);
    it->second.max_relative_error = std::max(it->second.max_relative_error, rel);
    it->second.parameters += 1;
    report.max_relative_error = std::max(report.max_relative_error, rel);
  }
  for (const auto& name : order) report.layers.push_back(by_layer[name]);
  return report;
}

}  // namespace infodemic::nn
