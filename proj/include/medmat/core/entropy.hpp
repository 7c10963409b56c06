#pragma once

#include <span>

#include "medmat/core/image.hpp"

namespace medmat {

// Entropies are in nats; 0 * log 0 is taken as 0.

/// -a ln a - (1-a) ln(1-a). Throws DomainError outside [0,1].
double binary_entropy(double a);

/// -sum p ln p over a categorical distribution. Each log argument is
/// clamped below at `floor`; terms with p == 0 contribute exactly 0.
double categorical_entropy(std::span<const double> probabilities, double floor = 1e-12);

/// Per-pixel binary entropy of an alpha matte.
UncertaintyField alpha_entropy(const AlphaMatte& alpha);

}  // namespace medmat
