#pragma once

#include <vector>

#include "medmat/nn/tape.hpp"

namespace medmat::nn {

// Differentiable ops over CHW tensors. Spatial ops are stride 1 with
// zero padding unless stated.

/// `weight` is (out, in, k*k), `bias` is (out, 1, 1); "same" padding.
Var conv2d(Var x, Var weight, Var bias, int kernel);

/// 2x2 mean pooling; height and width must be even.
Var avg_pool2(Var x);
/// Nearest-neighbour 2x upsampling.
Var upsample2(Var x);

Var relu(Var x);
Var sigmoid(Var x);
Var exp(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var add_constant(Var x, double c);

/// Concatenates along channels.
Var concat(const std::vector<Var>& parts);
Var slice_channels(Var x, int begin, int count);

/// (n,1,1) -> (n,H,W) by replication.
Var broadcast_spatial(Var v, int height, int width);
/// x(c,y,x) * gates(c).
Var scale_channels(Var x, Var gates);

Var global_avg_pool(Var x);
Var global_max_pool(Var x);

/// weight (out, in, 1) times x (in, 1, 1) plus bias (out, 1, 1).
Var linear(Var x, Var weight, Var bias);

/// Softmax across channels at every pixel.
Var softmax_channels(Var x);

/// Per-channel standardisation over the spatial plane:
/// (x - mean_c) / sqrt(var_c + eps), population variance.
Var instance_norm(Var x, double eps = 1e-5);

Var sum(Var x);
Var mean(Var x);

}  // namespace medmat::nn
