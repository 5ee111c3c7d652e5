#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "infodemic/nn/tensor.hpp"

namespace infodemic::nn {

struct AdamHyperparameters {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter first/second moments for Adam with bias correction.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamHyperparameters hp) : hp_(hp) {}

  const AdamHyperparameters& hyperparameters() const noexcept { return hp_; }
  std::size_t step() const noexcept { return step_; }
  const std::vector<NdArray>& first_moments() const noexcept { return m_; }
  const std::vector<NdArray>& second_moments() const noexcept { return v_; }

  /// Applies one update to every parameter from its current gradient.
  /// Throws NonFiniteError naming the first parameter with a NaN/Inf gradient;
  /// nothing is modified in that case.
  void apply(std::span<Parameter* const> params);

 private:
  AdamHyperparameters hp_;
  std::size_t step_ = 0;
  std::vector<NdArray> m_;
  std::vector<NdArray> v_;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

void zero_grads(std::span<Parameter* const> params);

}  // namespace infodemic::nn
