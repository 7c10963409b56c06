#include <cstdint>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "medmat/core/entropy.hpp"
#include "medmat/core/error.hpp"
#include "medmat/core/io.hpp"
#include "support/table.hpp"

using namespace medmat;

namespace {

std::filesystem::path scratch_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "medmat_test_core" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Tensor ramp(int c, int h, int w) {
  Tensor t({c, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = double(i % 256) / 255.0;
  return t;
}

}  // namespace

TEST_CASE("tensor indexing is channel-major") {
  Tensor t({2, 3, 4});
  t(1, 2, 3) = 7.0;
  CHECK(t[1 * 12 + 2 * 4 + 3] == 7.0);
  CHECK(t.channel(1).size() == 12);
  CHECK_THROWS_AS(Tensor({1, 2, 2}, std::vector<double>(3)), ShapeError);
  CHECK_THROWS_AS(require_same_shape({1, 2, 2}, {1, 2, 3}, "x"), ShapeError);
}

TEST_CASE("image validation") {
  CHECK_NOTHROW(Image(ramp(1, 8, 8)));
  CHECK_NOTHROW(Image(ramp(3, 8, 12)));
  CHECK_THROWS_AS(Image(ramp(2, 8, 8)), ShapeError);
  CHECK_THROWS_AS(Image(ramp(1, 7, 8)), ShapeError);
  Tensor bad = ramp(1, 8, 8);
  bad[3] = 1.5;
  CHECK_THROWS_AS(Image{bad}, DomainError);
  bad[3] = std::nan("");
  CHECK_THROWS_AS(Image{bad}, DomainError);
}

TEST_CASE("raster types reject out-of-domain values") {
  CHECK_THROWS_AS(AlphaMatte(Plane<double>(2, 2, 1.01)), DomainError);
  CHECK_THROWS_AS(AlphaMatte(Plane<double>(2, 2, -0.01)), DomainError);
  const AlphaMatte clipped = AlphaMatte::clipped(Plane<double>(2, 2, 1.5));
  CHECK(clipped.max() == 1.0);
  CHECK_THROWS_AS(BinaryMask(Plane<std::uint8_t>(2, 2, 2)), DomainError);
  CHECK_THROWS_AS(Trimap(Plane<TrimapLabel>(2, 2, TrimapLabel(7))), DomainError);
  CHECK_THROWS_AS(UncertaintyField(Plane<double>(2, 2, -1e-3)), DomainError);
}

TEST_CASE("trimap regions partition the grid") {
  Plane<TrimapLabel> p(3, 3, TrimapLabel::Unknown);
  p(0, 0) = TrimapLabel::Background;
  p(2, 2) = TrimapLabel::Foreground;
  const Trimap t(p);
  CHECK(t.count(TrimapLabel::Background) + t.count(TrimapLabel::Unknown) + t.count(TrimapLabel::Foreground) == 9);
  CHECK(t.region(TrimapLabel::Unknown).count() == 7);
}

TEST_CASE("binary entropy hits closed-form values") {
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK(binary_entropy(0.5) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  // mpmath: -(0.9 ln 0.9 + 0.1 ln 0.1)
  CHECK(std::abs(binary_entropy(0.9) - 0.3250829733914482395) < 1e-15);
  CHECK_THROWS_AS(binary_entropy(-1e-9), DomainError);
  CHECK_THROWS_AS(binary_entropy(1.0 + 1e-9), DomainError);
}

TEST_CASE("binary entropy agrees with the arbitrary-precision table") {
  const auto table = oracle::load_entropy_table(MEDMAT_TEST_DATA "/entropy_oracle.txt");
  REQUIRE(table.alpha.size() == 1000);
  double worst = 0.0;
  for (const auto& row : table.alpha) worst = std::max(worst, std::abs(binary_entropy(row.alpha) - row.entropy));
  CHECK(worst < 1e-10);
}

TEST_CASE("categorical entropy of a sample mean agrees with the table") {
  const auto table = oracle::load_entropy_table(MEDMAT_TEST_DATA "/entropy_oracle.txt");
  REQUIRE(table.uncertainty.size() == 1200);
  double worst = 0.0;
  for (const auto& row : table.uncertainty) {
    std::vector<double> mean(row.classes, 0.0);
    for (int k = 0; k < row.samples; ++k) {
      for (int c = 0; c < row.classes; ++c) mean[c] += row.probabilities[k * row.classes + c];
    }
    for (double& m : mean) m /= row.samples;
    worst = std::max(worst, std::abs(categorical_entropy(mean) - row.entropy));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("categorical entropy is maximal at the uniform distribution") {
  for (int c = 2; c <= 5; ++c) {
    const std::vector<double> uniform(c, 1.0 / c);
    CHECK(categorical_entropy(uniform) == doctest::Approx(std::log(double(c))).epsilon(1e-14));
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(3);
    double s = 0.0;
    for (double& v : p) s += (v = u(rng));
    for (double& v : p) v /= s;
    CHECK(categorical_entropy(p) <= std::log(3.0) + 1e-12);
    CHECK(categorical_entropy(p) >= 0.0);
  }
  const std::vector<double> onehot{0.0, 1.0};
  CHECK(categorical_entropy(onehot) == 0.0);
}

TEST_CASE("alpha entropy is elementwise") {
  Plane<double> p(2, 2);
  p(0, 0) = 0.0;
  p(0, 1) = 0.5;
  p(1, 0) = 0.9;
  p(1, 1) = 1.0;
  const UncertaintyField h = alpha_entropy(AlphaMatte(p));
  CHECK(h(0, 0) == 0.0);
  CHECK(h(0, 1) == doctest::Approx(std::numbers::ln2));
  CHECK(h(1, 0) == doctest::Approx(0.3250829733914482395));
  CHECK(h(1, 1) == 0.0);
}

TEST_CASE("png round trips") {
  const auto dir = scratch_dir("io");
  const Image gray(ramp(1, 9, 11));
  io::save_image(dir / "g.png", gray);
  const Image back = io::load_image(dir / "g.png");
  REQUIRE(back.pixels().shape() == gray.pixels().shape());
  for (std::size_t i = 0; i < back.pixels().size(); ++i) CHECK(back.pixels()[i] == doctest::Approx(gray.pixels()[i]).epsilon(1e-12));

  Tensor rgb = ramp(3, 8, 8);
  rgb(0, 0, 0) = 1.0;
  rgb(1, 0, 0) = 0.0;
  rgb(2, 0, 0) = 128.0 / 255.0;
  io::save_image(dir / "c.png", Image(rgb));
  const Image crgb = io::load_image(dir / "c.png");
  CHECK(crgb(0, 0, 0) == 1.0);
  CHECK(crgb(1, 0, 0) == 0.0);
  CHECK(crgb(2, 0, 0) == doctest::Approx(128.0 / 255.0));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Plane<double> a(8, 8);
  for (double& v : a.values()) v = u(rng);
  io::save_alpha(dir / "a.png", AlphaMatte(a));
  const AlphaMatte ab = io::load_alpha(dir / "a.png");
  for (std::size_t i = 0; i < ab.size(); ++i) CHECK(std::abs(ab[i] - a[i]) <= 1.0 / 510.0 + 1e-12);

  BinaryMask m(8, 8);
  m.set(3, 4, true);
  io::save_mask(dir / "m.png", m);
  CHECK(io::load_mask(dir / "m.png") == m);

  Plane<TrimapLabel> tp(8, 8, TrimapLabel::Background);
  tp(1, 1) = TrimapLabel::Unknown;
  tp(2, 2) = TrimapLabel::Foreground;
  io::save_trimap(dir / "t.png", Trimap(tp));
  CHECK(io::load_trimap(dir / "t.png") == Trimap(tp));

  CHECK_THROWS_AS(io::load_image(dir / "missing.png"), NotFoundError);
  {
    std::ofstream junk(dir / "junk.png");
    junk << "not a png";
  }
  CHECK_THROWS_AS(io::load_image(dir / "junk.png"), FormatError);
  CHECK_THROWS_AS(io::save_scaled(dir / "u.png", UncertaintyField(Plane<double>(8, 8)), 0.0), DomainError);
}

TEST_CASE("tensor storage is cache-line aligned") {
  for (int n : {1, 3, 7, 64, 1001}) {
    const Tensor t({n, 1, 1});
    CHECK(reinterpret_cast<std::uintptr_t>(t.data()) % 64 == 0);
    const Tensor copy = t;
    CHECK(reinterpret_cast<std::uintptr_t>(copy.data()) % 64 == 0);
  }
}
