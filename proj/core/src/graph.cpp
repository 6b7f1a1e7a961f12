#include "probmed/graph.hpp"

#include <stdexcept>
#include <string>

namespace probmed::diff {

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::check_owner(Var v, const char* where) const {
  if (!v.valid() || &v.graph() != this || v.id() >= nodes_.size()) {
    throw std::invalid_argument(std::string(where) + ": variable does not belong to this graph");
  }
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::parameter(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owner(in, "Graph::record");
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Graph::backward(Var loss) {
  check_owner(loss, "Graph::backward");
  const Tensor& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be a scalar [1, 1], got " + shape_string(lv));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  nodes_[loss.id()].grad = Tensor::scalar(1.0);

  std::vector<Tensor*> input_grads;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.requires_grad || !node.backward) continue;
    input_grads.clear();
    for (std::size_t in : node.inputs) {
      Node& src = nodes_[in];
      if (!src.requires_grad) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (src.grad.empty()) src.grad = Tensor(src.value.rows(), src.value.cols());
      input_grads.push_back(&src.grad);
    }
    node.backward(node.grad, input_grads);
  }
}

const Tensor& Graph::value(Var v) const {
  check_owner(v, "Graph::value");
  return nodes_[v.id()].value;
}

const Tensor& Graph::grad(Var v) const {
  check_owner(v, "Graph::grad");
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Graph::requires_grad(Var v) const {
  check_owner(v, "Graph::requires_grad");
  return nodes_[v.id()].requires_grad;
}

}  // namespace probmed::diff
