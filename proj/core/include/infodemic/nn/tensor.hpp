#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "infodemic/common.hpp"

namespace infodemic::nn {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles.
struct NdArray {
  Shape shape;
  std::vector<double> data;

  NdArray() = default;
  explicit NdArray(Shape s, double fill = 0.0) : shape(std::move(s)), data(element_count(shape), fill) {}
  NdArray(Shape s, std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const;
};

/// A trainable tensor: value plus gradient accumulator of the same shape.
struct Parameter {
  std::string name;
  NdArray value;
  NdArray grad;

  Parameter(std::string n, NdArray v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
  void zero_grad() { grad.fill(0.0); }
};

class Graph;

/// Handle to a node of a Graph: a value and its gradient.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const NdArray& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  /// Gradient of the last backward() root with respect to this node.
  const NdArray& grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operations recorded during a forward pass. Calling backward()
/// walks the tape in reverse and accumulates into Parameter::grad.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Constant input; no gradient is propagated past it.
  Tensor input(NdArray value);
  /// Leaf bound to a parameter; its gradient is added to `p.grad` on backward.
  Tensor parameter(Parameter& p);

  /// Records an op output. `backward(graph, self)` reads grad(self) and adds
  /// into its inputs' gradients via grad_mut(). The value must be finite.
  Tensor record(NdArray value, bool requires_grad, BackwardFn backward, const char* op_name);

  const NdArray& value(std::size_t id) const;
  const NdArray& grad(std::size_t id) const;
  /// Lazily allocated gradient buffer; returns nullptr for nodes that do not
  /// require grad. Parameter leaves alias Parameter::grad directly.
  NdArray* grad_mut(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id]->requires_grad; }

  /// Seeds d(root)/d(root) = 1 for a scalar root and back-propagates.
  /// Throws NonFiniteError when a parameter gradient is NaN/Inf.
  void backward(const Tensor& root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    NdArray value;
    NdArray grad;
    bool requires_grad = false;
    bool has_grad = false;
    Parameter* parameter = nullptr;
    BackwardFn backward;
  };
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace infodemic::nn
