#include "tsc/autodiff.hpp"

#include "tsc/error.hpp"

namespace tsc::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }
Tensor Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw UsageError("tape: operation mixes variables from different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

Tensor Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.grad.empty() ? Tensor::zeros_like(n.value) : n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw UsageError("backward: loss belongs to a different tape");
  const Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ShapeError("backward", "loss", "loss must be scalar, got " + shape_string(root.value.shape()));
  }
  grad_slot(loss.id()).fill(1.0);

  std::vector<Tensor*> slots;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    slots.clear();
    for (std::size_t in : node.inputs) {
      slots.push_back(nodes_[in].requires_grad ? &grad_slot(in) : nullptr);
    }
    node.backward(node.grad, slots);
  }
}

}  // namespace tsc::ad
