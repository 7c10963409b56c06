#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "medmat/core/error.hpp"
#include "medmat/nn/archive.hpp"
#include "medmat/nn/layers.hpp"
#include "medmat/nn/optim.hpp"
#include "support/oracles.hpp"

using namespace medmat;
using namespace medmat::nn;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Contracts an op output with a fixed random tensor so every output element
// carries a distinct weight in the scalar being differentiated.
Var project(Tape& tape, Var y, const Tensor& weights) { return sum(mul(y, tape.constant(weights))); }

void expect_gradients(const std::function<Var(Tape&)>& loss, const std::vector<Tensor*>& inputs) {
  const oracle::GradCheck r = oracle::check_gradients(loss, inputs, 12, 99);
  INFO("max relative error " << r.max_relative_error);
  CHECK(r.max_relative_error < 1e-3);
}

}  // namespace

TEST_CASE("tape: shared parameters accumulate and no-grad tapes record nothing") {
  Tensor w({1, 1, 1}, 3.0);
  Tape tape;
  Var a = tape.parameter(w);
  Var b = tape.parameter(w);
  CHECK(a.id() == b.id());
  Var y = mul(a, b);  // w^2
  tape.backward(y);
  REQUIRE(tape.grad_of(w) != nullptr);
  CHECK((*tape.grad_of(w))[0] == doctest::Approx(6.0));

  Tape frozen(false);
  Var c = frozen.parameter(w);
  CHECK_FALSE(c.requires_grad());
  frozen.backward(mul(c, c));
  CHECK(frozen.grad_of(w) == nullptr);

  Tape other;
  Var foreign = other.constant(Tensor({1, 1, 1}, 1.0));
  CHECK_THROWS_AS(add(a, foreign), StateError);
  CHECK_THROWS_AS(tape.backward(tape.constant(Tensor({2, 1, 1}))), ShapeError);
}

TEST_CASE("conv2d matches a direct zero-padded correlation") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({2, 5, 6}, rng);
  const Tensor w = random_tensor({3, 2, 9}, rng);
  const Tensor b = random_tensor({3, 1, 1}, rng);
  Tape tape(false);
  const Tensor y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 3).value();
  REQUIRE(y.shape() == Shape{3, 5, 6});
  for (int o = 0; o < 3; ++o) {
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 6; ++c) {
        double acc = b[o];
        for (int i = 0; i < 2; ++i) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int yy = r + ky - 1, xx = c + kx - 1;
              if (yy < 0 || yy >= 5 || xx < 0 || xx >= 6) continue;
              acc += w(o, i, ky * 3 + kx) * x(i, yy, xx);
            }
          }
        }
        CHECK(y(o, r, c) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("op gradients match central differences") {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor({2, 4, 4}, rng);
  Tensor z = random_tensor({2, 4, 4}, rng);
  Tensor w3 = random_tensor({3, 2, 9}, rng);
  Tensor w1 = random_tensor({3, 2, 1}, rng);
  Tensor b = random_tensor({3, 1, 1}, rng);
  Tensor v = random_tensor({2, 1, 1}, rng);
  Tensor lin_w = random_tensor({3, 2, 1}, rng);
  const Tensor r3 = random_tensor({3, 4, 4}, rng);
  const Tensor r2 = random_tensor({2, 4, 4}, rng);
  const Tensor r4 = random_tensor({4, 4, 4}, rng);
  const Tensor rpool = random_tensor({2, 2, 2}, rng);
  const Tensor rup = random_tensor({2, 8, 8}, rng);
  const Tensor rvec2 = random_tensor({2, 1, 1}, rng);
  const Tensor rvec3 = random_tensor({3, 1, 1}, rng);
  const Tensor r1 = random_tensor({1, 4, 4}, rng);

  SUBCASE("conv2d 3x3") {
    expect_gradients([&](Tape& t) { return project(t, conv2d(t.parameter(x), t.parameter(w3), t.parameter(b), 3), r3); },
                     {&x, &w3, &b});
  }
  SUBCASE("conv2d 1x1") {
    expect_gradients([&](Tape& t) { return project(t, conv2d(t.parameter(x), t.parameter(w1), t.parameter(b), 1), r3); },
                     {&x, &w1, &b});
  }
  SUBCASE("pooling and upsampling") {
    expect_gradients([&](Tape& t) { return project(t, avg_pool2(t.parameter(x)), rpool); }, {&x});
    expect_gradients([&](Tape& t) { return project(t, upsample2(t.parameter(x)), rup); }, {&x});
  }
  SUBCASE("pointwise") {
    expect_gradients([&](Tape& t) { return project(t, relu(t.parameter(x)), r2); }, {&x});
    expect_gradients([&](Tape& t) { return project(t, sigmoid(t.parameter(x)), r2); }, {&x});
    expect_gradients([&](Tape& t) { return project(t, nn::exp(t.parameter(x)), r2); }, {&x});
    expect_gradients([&](Tape& t) { return project(t, scale(t.parameter(x), -2.5), r2); }, {&x});
    expect_gradients([&](Tape& t) { return project(t, add_constant(t.parameter(x), 0.3), r2); }, {&x});
  }
  SUBCASE("binary arithmetic") {
    expect_gradients([&](Tape& t) { return project(t, add(t.parameter(x), t.parameter(z)), r2); }, {&x, &z});
    expect_gradients([&](Tape& t) { return project(t, sub(t.parameter(x), t.parameter(z)), r2); }, {&x, &z});
    expect_gradients([&](Tape& t) { return project(t, mul(t.parameter(x), t.parameter(z)), r2); }, {&x, &z});
  }
  SUBCASE("channel plumbing") {
    expect_gradients([&](Tape& t) { return project(t, concat({t.parameter(x), t.parameter(z)}), r4); }, {&x, &z});
    expect_gradients([&](Tape& t) { return project(t, slice_channels(t.parameter(x), 1, 1), r1); }, {&x});
    expect_gradients([&](Tape& t) { return project(t, broadcast_spatial(t.parameter(v), 4, 4), r2); }, {&v});
    expect_gradients([&](Tape& t) { return project(t, scale_channels(t.parameter(x), t.parameter(v)), r2); },
                     {&x, &v});
  }
  SUBCASE("global pooling and linear") {
    expect_gradients([&](Tape& t) { return project(t, global_avg_pool(t.parameter(x)), rvec2); }, {&x});
    expect_gradients([&](Tape& t) { return project(t, global_max_pool(t.parameter(x)), rvec2); }, {&x});
    expect_gradients([&](Tape& t) { return project(t, linear(t.parameter(v), t.parameter(lin_w), t.parameter(b)), rvec3); },
                     {&v, &lin_w, &b});
  }
  SUBCASE("softmax and reductions") {
    expect_gradients([&](Tape& t) { return project(t, softmax_channels(t.parameter(x)), r2); }, {&x});
    expect_gradients([&](Tape& t) { return mean(mul(t.parameter(x), t.parameter(x))); }, {&x});
    expect_gradients([&](Tape& t) { return project(t, instance_norm(t.parameter(x)), r2); }, {&x});
  }
}

TEST_CASE("softmax rows are probability vectors") {
  std::mt19937_64 rng(2);
  Tape tape(false);
  const Tensor p = softmax_channels(tape.constant(random_tensor({3, 5, 5}, rng, -30, 30))).value();
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      double s = 0.0;
      for (int c = 0; c < 3; ++c) {
        CHECK(p(c, y, x) >= 0.0);
        s += p(c, y, x);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("instance norm standardises each channel and ignores its scale") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({3, 6, 5}, rng, -2, 5);
  Tensor big = x;
  for (double& v : big.values()) v = 1e4 * v + 7.0;
  Tape tape(false);
  const Tensor y = instance_norm(tape.constant(x), 1e-12).value();
  const Tensor z = instance_norm(tape.constant(big), 1e-12).value();
  for (int c = 0; c < 3; ++c) {
    double m = 0.0, q = 0.0;
    for (int i = 0; i < 30; ++i) m += y[c * 30 + i];
    for (int i = 0; i < 30; ++i) q += y[c * 30 + i] * y[c * 30 + i];
    CHECK(std::abs(m / 30) < 1e-12);
    CHECK(q / 30 == doctest::Approx(1.0).epsilon(1e-9));
  }
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(z[i] == doctest::Approx(y[i]).epsilon(1e-9));
  const Tensor flat = instance_norm(tape.constant(Tensor({1, 4, 4}, 3.0))).value();
  for (double v : flat.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(instance_norm(tape.constant(x), 0.0), DomainError);
}

TEST_CASE("layers are deterministic per seed and name their parameters") {
  Rng a(11), b(11);
  const Conv2d c1(2, 4, 3, a), c2(2, 4, 3, b);
  CHECK(c1.weight == c2.weight);
  CHECK(c1.in_channels() == 2);
  CHECK(c1.out_channels() == 4);
  Conv2d c3 = c1;
  ParamList list;
  c3.collect("net.conv", list);
  REQUIRE(list.size() == 2);
  CHECK(list[0].name == "net.conv.weight");
  CHECK(list[1].name == "net.conv.bias");
  c3.zero();
  for (double v : c3.weight.values()) CHECK(v == 0.0);
}

TEST_CASE("adam minimises a quadratic and applies coupled decay only where asked") {
  Tensor w({3, 1, 1}, std::vector<double>{4.0, -3.0, 2.0});
  const Tensor target({3, 1, 1}, std::vector<double>{1.0, 1.0, 1.0});
  ParamList params{{"w", &w, false}};
  Adam adam;
  for (int step = 0; step < 2000; ++step) {
    Tape tape;
    Var d = sub(tape.parameter(w), tape.constant(target));
    tape.backward(sum(mul(d, d)));
    GradientBuffer buffer(params);
    buffer.accumulate(tape, params);
    adam.step(params, buffer.grads(), 0.05);
  }
  for (double v : w.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(adam.steps() == 2000);

  // Zero loss gradient: only the decay term moves the weight, toward 0.
  Tensor decayed({1, 1, 1}, 1.0), kept({1, 1, 1}, 1.0);
  ParamList two{{"a", &decayed, true}, {"b", &kept, false}};
  Adam wd({.weight_decay = 0.1});
  wd.step(two, {Tensor({1, 1, 1}), Tensor({1, 1, 1})}, 0.01);
  CHECK(decayed[0] < 1.0);
  CHECK(kept[0] == 1.0);
}

TEST_CASE("gradient buffer sums and scales") {
  Tensor w({1, 1, 1}, 2.0);
  ParamList params{{"w", &w, true}};
  GradientBuffer buffer(params);
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    tape.backward(scale(tape.parameter(w), 1.5));
    buffer.accumulate(tape, params);
  }
  CHECK(buffer.grads()[0][0] == doctest::Approx(4.5));
  buffer.scale(1.0 / 3.0);
  CHECK(buffer.grads()[0][0] == doctest::Approx(1.5));
  CHECK(buffer.squared_norm() == doctest::Approx(2.25));
  buffer.zero();
  CHECK(buffer.squared_norm() == 0.0);
}

TEST_CASE("archive round trip is bit exact and versioned") {
  const auto dir = std::filesystem::temp_directory_path() / "medmat_test_nn";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(4);
  Archive a;
  a.format = "unit";
  a.version = 3;
  a.metadata["note"] = "x";
  a.tensors["w"] = random_tensor({2, 3, 4}, rng);
  a.tensors["w"][0] = std::nextafter(1.0, 2.0);
  save_archive(dir / "a.cbor", a);
  const Archive b = load_archive(dir / "a.cbor", "unit", 3);
  CHECK(b.tensors.at("w") == a.tensors.at("w"));
  CHECK(b.metadata["note"] == "x");
  CHECK_THROWS_AS(load_archive(dir / "a.cbor", "unit", 4), VersionError);
  CHECK_THROWS_AS(load_archive(dir / "a.cbor", "other", 3), VersionError);
  CHECK_THROWS_AS(load_archive(dir / "missing.cbor", "unit", 3), NotFoundError);
  {
    std::ofstream junk(dir / "junk.cbor", std::ios::binary);
    junk << "\xff\x00garbage";
  }
  CHECK_THROWS_AS(load_archive(dir / "junk.cbor", "unit", 3), FormatError);
}
