#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "medmat/nn/ops.hpp"

namespace medmat::nn {

using Rng = std::mt19937_64;

/// A named, mutable view of one weight array. Names are dotted module
/// paths, e.g. "maskgen.unet.enc0.conv1.weight".
struct ParamRef {
  std::string name;
  Tensor* tensor = nullptr;
  bool decay = true;
};
using ParamList = std::vector<ParamRef>;

/// He-normal initialised convolution with "same" padding.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  void collect(const std::string& prefix, ParamList& out);
  void zero();

  int in_channels() const { return weight.shape().height; }
  int out_channels() const { return weight.shape().channels; }
  int kernel() const { return kernel_; }

  Tensor weight;  // (out, in, k*k)
  Tensor bias;    // (out, 1, 1)

 private:
  int kernel_ = 1;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  void collect(const std::string& prefix, ParamList& out);
  void zero();

  Tensor weight;  // (out, in, 1)
  Tensor bias;    // (out, 1, 1)
};

}  // namespace medmat::nn
