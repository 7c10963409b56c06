#include <cmath>
#include <random>

#include "doctest.h"
#include "medmat/core/error.hpp"
#include "medmat/metrics/metrics.hpp"
#include "support/oracles.hpp"

using namespace medmat;
using namespace medmat::metrics;

namespace {

std::vector<BinaryMask> random_set(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> density(0.05, 0.95);
  std::vector<BinaryMask> set;
  for (int k = 0; k < n; ++k) set.push_back(oracle::random_mask(8, 8, rng, density(rng)));
  return set;
}

BinaryMask square(int n, int y0, int x0, int side) {
  BinaryMask m(n, n);
  for (int y = y0; y < y0 + side; ++y) {
    for (int x = x0; x < x0 + side; ++x) m.set(y, x, true);
  }
  return m;
}

}  // namespace

TEST_CASE("SAD and MSE hand values") {
  // Four pixels off by 0.5, the rest exact, on a 4x4 grid.
  Plane<double> p(4, 4, 0.2), g(4, 4, 0.2);
  for (int x = 0; x < 4; ++x) p(1, x) = 0.7;
  CHECK(std::abs(sad(AlphaMatte(p), AlphaMatte(g)) - 2.0) < 1e-9);
  CHECK(std::abs(mse(AlphaMatte(p), AlphaMatte(g)) - 0.0625) < 1e-9);

  // Restricted to the changed row: 4 * 0.5 and 0.25.
  BinaryMask row(4, 4);
  for (int x = 0; x < 4; ++x) row.set(1, x, true);
  CHECK(std::abs(sad(AlphaMatte(p), AlphaMatte(g), row) - 2.0) < 1e-9);
  CHECK(std::abs(mse(AlphaMatte(p), AlphaMatte(g), row) - 0.25) < 1e-9);

  // All-ones vs all-zeros plus a 0.5 offset over 20 pixels.
  Plane<double> half(4, 5, 0.5), zero(4, 5, 0.0);
  CHECK(std::abs(sad(AlphaMatte(half), AlphaMatte(zero)) - 10.0) < 1e-9);
  CHECK(std::abs(mse(AlphaMatte(half), AlphaMatte(zero)) - 0.25) < 1e-9);
}

TEST_CASE("SAD and MSE equal elementwise oracles on random mattes") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const AlphaMatte p = oracle::random_alpha(8, 8, rng), g = oracle::random_alpha(8, 8, rng);
    const BinaryMask region = oracle::random_mask(8, 8, rng, 0.6);
    if (region.count() == 0) continue;
    double s = 0.0, q = 0.0;
    int n = 0;
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        if (!region(y, x)) continue;
        s += std::abs(p(y, x) - g(y, x));
        q += (p(y, x) - g(y, x)) * (p(y, x) - g(y, x));
        ++n;
      }
    }
    CHECK(std::abs(sad(p, g, region) - s) < 1e-9);
    CHECK(std::abs(mse(p, g, region) - q / n) < 1e-9);
  }
}

TEST_CASE("empty regions are rejected") {
  std::mt19937_64 rng(1);
  const AlphaMatte p = oracle::random_alpha(8, 8, rng);
  const BinaryMask empty(8, 8);
  CHECK_THROWS_AS(sad(p, p, empty), DegenerateInputError);
  CHECK_THROWS_AS(mse(p, p, empty), DegenerateInputError);
  CHECK_THROWS_AS(grad_metric(p, p, empty), DegenerateInputError);
  CHECK_THROWS_AS(conn_metric(p, p, empty), DegenerateInputError);
  CHECK_THROWS_AS(sad(p, oracle::random_alpha(8, 9, rng)), ShapeError);
}

TEST_CASE("GED and adapted Dice equal brute-force enumeration") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_set(4, rng), g = random_set(4, rng);
    CHECK(std::abs(ged(p, g) - oracle::ged(p, g)) < 1e-12);
    CHECK(std::abs(adapted_dice(p, g) - oracle::adapted_dice(p, g)) < 1e-12);
    CHECK(std::abs(iou(p[0], g[0]) - oracle::iou(p[0], g[0])) < 1e-12);
    CHECK(std::abs(dice(p[0], g[0]) - oracle::dice(p[0], g[0])) < 1e-12);
  }
}

TEST_CASE("GED hand values") {
  const BinaryMask a = square(8, 0, 0, 4), b = square(8, 4, 4, 4);
  // Disjoint singletons: 2 * cross distance 1, within-set distances 0.
  CHECK(ged(std::vector<BinaryMask>{a}, std::vector<BinaryMask>{b}) == doctest::Approx(2.0));
  CHECK(ged(std::vector<BinaryMask>{a, b}, std::vector<BinaryMask>{a, b}) == doctest::Approx(0.0));
  // p = {a}, g = {a, b}: cross 0.5, within p 0, within g 2/4.
  CHECK(ged(std::vector<BinaryMask>{a}, std::vector<BinaryMask>{a, b}) == doctest::Approx(0.5));
  const BinaryMask none(8, 8);
  CHECK(iou(none, none) == 1.0);
  CHECK(dice(none, none) == 1.0);
  CHECK(dice(a, none) == 0.0);
  CHECK_THROWS_AS(ged(std::vector<BinaryMask>{}, std::vector<BinaryMask>{a}), ArityError);
}

TEST_CASE("GED is symmetric and vanishes on identical sets") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_set(3, rng), g = random_set(5, rng);
    CHECK(ged(p, g) == doctest::Approx(ged(g, p)).epsilon(1e-12));
    CHECK(std::abs(ged(p, p)) < 1e-12);
    const double d = adapted_dice(p, g);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("Gaussian derivative kernel") {
  const GaussianDerivative k = gaussian_derivative(kGradSigma);
  CHECK(k.halfsize == 4);
  REQUIRE(k.derivative.size() == 9);
  double dn = 0.0, gn = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    dn += k.derivative[i] * k.derivative[i];
    gn += k.smoothing[i] * k.smoothing[i];
    CHECK(k.derivative[i] == doctest::Approx(-k.derivative[8 - i]));
  }
  CHECK(dn == doctest::Approx(1.0));
  CHECK(gn == doctest::Approx(1.0));
  CHECK_THROWS_AS(gaussian_derivative(0.0), DomainError);
}

TEST_CASE("Grad metric agrees with a direct 2D convolution") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 10; ++trial) {
    const AlphaMatte p = oracle::random_alpha(12, 10, rng), g = oracle::random_alpha(12, 10, rng);
    const double direct = oracle::grad_metric(p, g);
    CHECK(grad_metric(p, g) == doctest::Approx(direct).epsilon(1e-10));
  }
  const AlphaMatte flat(Plane<double>(9, 9, 0.4));
  const Plane<double> flat_grad = gradient_magnitude(flat.plane());
  for (double v : flat_grad.values()) CHECK(std::abs(v) < 1e-12);
  CHECK(grad_metric(flat, flat) == 0.0);
}

TEST_CASE("Conn metric agrees with a BFS oracle") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 30; ++trial) {
    const AlphaMatte p = oracle::random_alpha(10, 10, rng), g = oracle::random_alpha(10, 10, rng);
    CHECK(std::abs(conn_metric(p, g) - oracle::conn_metric(p, g)) < 1e-9);
  }
  // Smooth blobs exercise large components rather than speckle.
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_real_distribution<double> c(2.0, 8.0), s(0.9, 1.1);
    Plane<double> a(12, 12), b(12, 12);
    const double cy = c(rng), cx = c(rng), sc = s(rng);
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 12; ++x) {
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        a(y, x) = std::exp(-r2 / 18.0);
        b(y, x) = std::exp(-r2 / (18.0 * sc));
      }
    }
    CHECK(std::abs(conn_metric(AlphaMatte(a), AlphaMatte(b)) - oracle::conn_metric(AlphaMatte(a), AlphaMatte(b))) <
          1e-9);
  }
}

TEST_CASE("connectivity levels of a fully opaque pair are 1 and Conn of identical mattes is 0") {
  const AlphaMatte one(Plane<double>(8, 8, 1.0));
  const auto opaque_levels = connectivity_levels(one, one);
  for (double l : opaque_levels.values()) CHECK(l == 1.0);
  std::mt19937_64 rng(61);
  const AlphaMatte p = oracle::random_alpha(8, 8, rng);
  CHECK(conn_metric(p, p) == 0.0);
  const AlphaMatte zero(Plane<double>(8, 8, 0.0));
  const auto clear_levels = connectivity_levels(zero, zero);
  for (double l : clear_levels.values()) CHECK(l == 0.0);
}

TEST_CASE("matting report scales SAD, Grad and Conn") {
  std::mt19937_64 rng(67);
  const AlphaMatte p = oracle::random_alpha(8, 8, rng), g = oracle::random_alpha(8, 8, rng);
  const MetricReport r = matting_report(p, g);
  CHECK(r.sad == doctest::Approx(sad(p, g) * 1e-3));
  CHECK(r.mse == doctest::Approx(mse(p, g)));
  CHECK(r.grad == doctest::Approx(grad_metric(p, g) * 1e-3));
  CHECK(r.conn == doctest::Approx(conn_metric(p, g) * 1e-3));
  CHECK_FALSE(r.region_restricted);
  CHECK(matting_report(p, g, oracle::random_mask(8, 8, rng, 0.9)).region_restricted);
}

TEST_CASE("published reference figures") {
  CHECK(reference::kMedicalMatting[0].sad == 0.0447);
  CHECK(reference::kMedicalMatting[1].sad == 1.0330);
  CHECK(reference::kMedicalMatting[2].conn == 0.4255);
}
