#include "infodemic/nn/optim.hpp"

#include <cmath>

namespace infodemic::nn {

void AdamState::apply(std::span<Parameter* const> params) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }
  if (m_.size() != params.size()) throw ShapeError("Adam state was created for a different parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->grad.shape != m_[k].shape) {
      throw ShapeError("Adam moment shape mismatch for parameter '" + params[k]->name + "'");
    }
    if (!params[k]->grad.all_finite()) {
      throw NonFiniteError("non-finite gradient for parameter '" + params[k]->name + "'");
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(hp_.beta1, t);
  const double bc2 = 1.0 - std::pow(hp_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value.data;
    const auto& g = params[k]->grad.data;
    auto& m = m_[k].data;
    auto& v = v_[k].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = hp_.beta1 * m[i] + (1.0 - hp_.beta1) * g[i];
      v[i] = hp_.beta2 * v[i] + (1.0 - hp_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= hp_.learning_rate * m_hat / (std::sqrt(v_hat) + hp_.epsilon);
    }
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (double g : p->grad.data) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto* p : params) {
      for (double& g : p->grad.data) g *= scale;
    }
  }
  return norm;
}

void zero_grads(std::span<Parameter* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace infodemic::nn
