#include "medmat/nn/tape.hpp"

#include "medmat/core/error.hpp"

namespace medmat::nn {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw StateError("use of an unbound Var");
  return tape_->value_of(id_);
}

bool Var::requires_grad() const {
  return tape_ != nullptr && tape_->nodes_[static_cast<std::size_t>(id_)].requires_grad;
}

const Tensor& Tape::value_of(int id) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  return node.external != nullptr ? *node.external : node.value;
}

Var Tape::push(Tensor value, bool requires_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Tensor value) { return push(std::move(value), record_gradients_, nullptr); }

Var Tape::parameter(const Tensor& weights) {
  if (auto it = params_.find(&weights); it != params_.end()) return Var(this, it->second);
  Node node;
  node.external = &weights;
  node.requires_grad = record_gradients_;
  nodes_.push_back(std::move(node));
  Var v(this, static_cast<int>(nodes_.size() - 1));
  params_.emplace(&weights, v.id_);
  return v;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw StateError("op inputs recorded on a different tape");
    needs = needs || in.requires_grad();
  }
  return push(std::move(value), needs, std::move(backward));
}

Tensor* Tape::grad_sink(const Var& v) {
  Node& node = nodes_[static_cast<std::size_t>(v.id_)];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor(value_of(v.id_).shape());
  return &node.grad;
}

void Tape::backward(const Var& scalar) {
  if (scalar.tape_ != this) throw StateError("backward on a foreign Var");
  Node& root = nodes_[static_cast<std::size_t>(scalar.id_)];
  if (value_of(scalar.id_).size() != 1) throw ShapeError("backward requires a scalar output");
  if (!root.requires_grad) return;
  root.grad = Tensor(value_of(scalar.id_).shape(), 1.0);
  for (int id = scalar.id_; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
  }
}

const Tensor* Tape::grad(const Var& v) const {
  const Node& node = nodes_[static_cast<std::size_t>(v.id_)];
  return node.grad.empty() ? nullptr : &node.grad;
}

const Tensor* Tape::grad_of(const Tensor& parameter) const {
  auto it = params_.find(&parameter);
  if (it == params_.end()) return nullptr;
  const Node& node = nodes_[static_cast<std::size_t>(it->second)];
  return node.grad.empty() ? nullptr : &node.grad;
}

}  // namespace medmat::nn
