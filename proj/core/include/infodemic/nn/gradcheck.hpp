#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "infodemic/nn/tensor.hpp"

namespace infodemic::nn {

struct LayerGradError {
  std::string layer;
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
};

struct GradCheckReport {
  std::vector<LayerGradError> layers;
  double max_relative_error = 0.0;
  double tolerance = 0.0;

  bool passed() const noexcept { return max_relative_error < tolerance; }
};

/// Builds the forward graph from the current parameter values and returns a scalar loss.
using LossFn = std::function<Tensor(Graph&)>;

/// Compares backprop gradients with central differences for every element of
/// every parameter. Per parameter tensor the error is
/// ||analytic - numeric|| / (||analytic|| + ||numeric||), 0 when both vanish.
/// Layers are named by the parameter name up to its last '.'.
GradCheckReport grad_check(std::span<Parameter* const> params, const LossFn& loss, double epsilon = 1e-5,
                           double tolerance = 1e-6);

}  // namespace infodemic::nn
