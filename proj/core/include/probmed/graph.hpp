#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "probmed/tensor.hpp"

namespace probmed::diff {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid as long as its graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives the gradient flowing into a node and accumulates into the
/// gradients of its inputs. Entries of `input_grads` are null for inputs
/// that do not require a gradient.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> input_grads)>;

/// Tape of operations for reverse-mode differentiation. Nodes are appended in
/// execution order, so the tape is always topologically sorted. A Graph owns
/// all of its state; independent graphs can be used from different threads.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Appends an operation node. `backward` may be empty when no input needs a
  /// gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// Reverse accumulation from a 1 x 1 node. Clears gradients from any
  /// previous call first.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() loss with respect to `v`; zeros when the
  /// node was unreachable.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    mutable Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Node node);
  void check_owner(Var v, const char* where) const;

  std::vector<Node> nodes_;
};

}  // namespace probmed::diff
