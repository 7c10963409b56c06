#include "medmat/core/entropy.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "medmat/core/error.hpp"

namespace medmat {

namespace {

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

double binary_entropy(double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw DomainError(fmt::format("alpha {} outside [0,1]", a));
  return -xlogx(a) - xlogx(1.0 - a);
}

double categorical_entropy(std::span<const double> probabilities, double floor) {
  double h = 0.0;
  for (double p : probabilities) {
    if (p > 0.0) h -= p * std::log(std::max(p, floor));
  }
  return h;
}

UncertaintyField alpha_entropy(const AlphaMatte& alpha) {
  Plane<double> u(alpha.height(), alpha.width());
  for (std::size_t i = 0; i < alpha.size(); ++i) u[i] = binary_entropy(alpha[i]);
  return UncertaintyField(std::move(u));
}

}  // namespace medmat
