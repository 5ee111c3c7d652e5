#include "infodemic/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace infodemic::nn {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

NdArray::NdArray(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != element_count(shape)) {
    throw ShapeError("array of " + std::to_string(data.size()) + " values does not fit shape " + to_string(shape));
  }
}

bool NdArray::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

const NdArray& Tensor::value() const { return graph_->value(id_); }
const NdArray& Tensor::grad() const { return graph_->grad(id_); }

Tensor Graph::input(NdArray value) {
  if (!value.all_finite()) throw NonFiniteError("non-finite value fed to the graph");
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Graph::parameter(Parameter& p) {
  if (!p.value.all_finite()) throw NonFiniteError("parameter '" + p.name + "' holds a non-finite value");
  if (p.grad.shape != p.value.shape) p.grad = NdArray(p.value.shape);
  auto node = std::make_unique<Node>();
  node->requires_grad = true;
  node->parameter = &p;
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Graph::record(NdArray value, bool requires_grad, BackwardFn backward, const char* op_name) {
  if (!value.all_finite()) throw NonFiniteError(std::string("non-finite output from ") + op_name);
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  if (requires_grad) node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

const NdArray& Graph::value(std::size_t id) const {
  const Node& n = *nodes_[id];
  return n.parameter ? n.parameter->value : n.value;
}

const NdArray& Graph::grad(std::size_t id) const {
  const Node& n = *nodes_[id];
  if (n.parameter) return n.parameter->grad;
  if (!n.has_grad) throw Error("gradient requested for a node that received none");
  return n.grad;
}

NdArray* Graph::grad_mut(std::size_t id) {
  Node& n = *nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.parameter) {
    n.has_grad = true;
    return &n.parameter->grad;
  }
  if (!n.has_grad) {
    n.grad = NdArray(n.value.shape);
    n.has_grad = true;
  }
  return &n.grad;
}

void Graph::backward(const Tensor& root) {
  if (&root.graph() != this) throw Error("backward root belongs to another graph");
  if (value(root.id()).size() != 1) {
    throw ShapeError("backward root must be a scalar, got " + to_string(value(root.id()).shape));
  }
  if (!nodes_[root.id()]->requires_grad) return;
  grad_mut(root.id())->data[0] += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = *nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) {
      n.backward(*this, i);
    } else if (n.parameter && !n.parameter->grad.all_finite()) {
      throw NonFiniteError("non-finite gradient for parameter '" + n.parameter->name + "'");
    }
  }
}

}  // namespace infodemic::nn
