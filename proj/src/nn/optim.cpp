#include "medmat/nn/optim.hpp"

#include <cmath>

#include "medmat/core/error.hpp"

namespace medmat::nn {

GradientBuffer::GradientBuffer(const ParamList& params) {
  grads_.reserve(params.size());
  for (const ParamRef& p : params) grads_.emplace_back(p.tensor->shape());
}

void GradientBuffer::accumulate(const Tape& tape, const ParamList& params) {
  if (params.size() != grads_.size()) throw ShapeError("gradient buffer / parameter list mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (const Tensor* g = tape.grad_of(*params[i].tensor)) grads_[i] += *g;
  }
}

void GradientBuffer::scale(double factor) {
  for (Tensor& g : grads_) g *= factor;
}

void GradientBuffer::zero() {
  for (Tensor& g : grads_) g.fill(0.0);
}

double GradientBuffer::squared_norm() const {
  double acc = 0.0;
  for (const Tensor& g : grads_) {
    for (double v : g.values()) acc += v * v;
  }
  return acc;
}

void Adam::step(const ParamList& params, const std::vector<Tensor>& grads, double lr) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter / gradient count mismatch");
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].tensor;
    const Tensor& g = grads[i];
    require_same_shape(w.shape(), g.shape(), "adam step");
    auto [it, inserted] = moments_.try_emplace(params[i].name);
    Moments& m = it->second;
    if (inserted) {
      m.first = Tensor(w.shape());
      m.second = Tensor(w.shape());
    }
    const double decay = params[i].decay ? options_.weight_decay : 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double grad = g[k] + decay * w[k];
      m.first[k] = options_.beta1 * m.first[k] + (1.0 - options_.beta1) * grad;
      m.second[k] = options_.beta2 * m.second[k] + (1.0 - options_.beta2) * grad * grad;
      const double mhat = m.first[k] / bc1;
      const double vhat = m.second[k] / bc2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

}  // namespace medmat::nn
