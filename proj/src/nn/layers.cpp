#include "medmat/nn/layers.hpp"

#include <cmath>

#include "medmat/core/error.hpp"

namespace medmat::nn {

namespace {

void he_normal(Tensor& t, int fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double& v : t.values()) v = dist(rng);
}

}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, Rng& rng)
    : weight({out_channels, in_channels, kernel * kernel}), bias({out_channels, 1, 1}), kernel_(kernel) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("conv2d needs positive channels and an odd kernel");
  }
  he_normal(weight, in_channels * kernel * kernel, rng);
}

Var Conv2d::operator()(Tape& tape, Var x) const {
  return conv2d(x, tape.parameter(weight), tape.parameter(bias), kernel_);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, false});
}

void Conv2d::zero() {
  weight.fill(0.0);
  bias.fill(0.0);
}

Linear::Linear(int in_features, int out_features, Rng& rng)
    : weight({out_features, in_features, 1}), bias({out_features, 1, 1}) {
  if (in_features < 1 || out_features < 1) throw ConfigError("linear layer needs positive extents");
  he_normal(weight, in_features, rng);
}

Var Linear::operator()(Tape& tape, Var x) const {
  return linear(x, tape.parameter(weight), tape.parameter(bias));
}

void Linear::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, false});
}

void Linear::zero() {
  weight.fill(0.0);
  bias.fill(0.0);
}

}  // namespace medmat::nn
