#pragma once

#include <map>
#include <string>
#include <vector>

#include "medmat/nn/layers.hpp"

namespace medmat::nn {

/// Per-parameter gradient sums over a mini-batch, aligned with a ParamList.
class GradientBuffer {
 public:
  explicit GradientBuffer(const ParamList& params);

  /// Adds every parameter gradient recorded on `tape`.
  void accumulate(const Tape& tape, const ParamList& params);
  void scale(double factor);
  void zero();

  const std::vector<Tensor>& grads() const { return grads_; }
  double squared_norm() const;

 private:
  std::vector<Tensor> grads_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Coupled L2: decay * w is added to the gradient of decayed params.
  double weight_decay = 0.0;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(const ParamList& params, const std::vector<Tensor>& grads, double lr);
  long steps() const { return steps_; }

 private:
  struct Moments {
    Tensor first;
    Tensor second;
  };

  AdamOptions options_;
  long steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace medmat::nn
