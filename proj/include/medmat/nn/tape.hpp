#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "medmat/core/tensor.hpp"

namespace medmat::nn {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode recorder. Every op appends a node holding its value and,
/// when any input requires a gradient, a closure that pushes the node's
/// gradient into its inputs. Nodes are appended in topological order, so
/// backward is a single reverse sweep.
///
/// Model parameters are bound with parameter(); binding the same tensor
/// twice yields the same node so its gradient accumulates over every use.
/// Bound parameters are referenced, not copied, and must outlive the tape.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  /// With `record_gradients` false, parameters bind as constants and no
  /// backward closures are kept.
  explicit Tape(bool record_gradients = true) : record_gradients_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var parameter(const Tensor& weights);

  /// Appends an op result. `backward` is dropped when no input needs a
  /// gradient.
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  /// Gradient accumulator of `v`, zero-allocated on first use; nullptr when
  /// `v` does not require a gradient.
  Tensor* grad_sink(const Var& v);

  /// Seeds d(scalar)/d(scalar) = 1 and runs every recorded closure.
  void backward(const Var& scalar);

  const Tensor* grad(const Var& v) const;
  const Tensor* grad_of(const Tensor& parameter) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    const Tensor* external = nullptr;  // bound parameter storage
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Tensor value, bool requires_grad, Backward backward);

  const Tensor& value_of(int id) const;

  bool record_gradients_ = true;
  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, int> params_;
};

}  // namespace medmat::nn
