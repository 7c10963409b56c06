#include "medmat/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include "medmat/core/error.hpp"

namespace medmat::metrics {

namespace {

std::vector<std::uint8_t> region_pixels(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region,
                                        const char* what) {
  require_same_extent(pred, gt, "prediction vs ground truth");
  std::vector<std::uint8_t> keep(pred.size(), 1);
  if (region) {
    require_same_extent(pred, *region, "prediction vs evaluation region");
    if (region->count() == 0) throw DegenerateInputError(fmt::format("{} over an empty region", what));
    std::copy(region->values().begin(), region->values().end(), keep.begin());
  }
  return keep;
}

void require_mask_set(std::span<const BinaryMask> set, const char* what) {
  if (set.empty()) throw ArityError(fmt::format("{} mask set is empty", what));
  for (const BinaryMask& m : set) require_same_extent(m, set.front(), "mask set");
}

// Correlation with replicate padding along one axis.
Plane<double> filter_axis(const Plane<double>& in, std::span<const double> taps, bool horizontal) {
  const int h = in.height(), w = in.width();
  const int half = static_cast<int>(taps.size() / 2);
  Plane<double> out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        const int sy = horizontal ? y : std::clamp(y + k, 0, h - 1);
        const int sx = horizontal ? std::clamp(x + k, 0, w - 1) : x;
        acc += taps[static_cast<std::size_t>(k + half)] * in(sy, sx);
      }
      out(y, x) = acc;
    }
  }
  return out;
}

}  // namespace

double sad(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region) {
  const auto keep = region_pixels(pred, gt, region, "SAD");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (keep[i]) total += std::abs(pred[i] - gt[i]);
  }
  return total;
}

double mse(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region) {
  const auto keep = region_pixels(pred, gt, region, "MSE");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!keep[i]) continue;
    const double d = pred[i] - gt[i];
    total += d * d;
    ++count;
  }
  return total / static_cast<double>(count);
}

GaussianDerivative gaussian_derivative(double sigma) {
  if (!(sigma > 0.0)) throw DomainError("Gaussian sigma must be positive");
  constexpr double epsilon = 1e-2;
  GaussianDerivative k;
  k.halfsize = static_cast<int>(
      std::ceil(sigma * std::sqrt(-2.0 * std::log(std::sqrt(2.0 * std::numbers::pi) * sigma * epsilon))));
  double g_norm = 0.0, d_norm = 0.0;
  for (int u = -k.halfsize; u <= k.halfsize; ++u) {
    const double g = std::exp(-u * u / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    const double d = -u * g / (sigma * sigma);
    k.smoothing.push_back(g);
    k.derivative.push_back(d);
    g_norm += g * g;
    d_norm += d * d;
  }
  // The 2D kernel g(v) d(u) is scaled to unit L2 norm; it factors per axis.
  for (double& g : k.smoothing) g /= std::sqrt(g_norm);
  for (double& d : k.derivative) d /= std::sqrt(d_norm);
  return k;
}

Plane<double> gradient_magnitude(const Plane<double>& field, double sigma) {
  const GaussianDerivative k = gaussian_derivative(sigma);
  const Plane<double> gx = filter_axis(filter_axis(field, k.smoothing, false), k.derivative, true);
  const Plane<double> gy = filter_axis(filter_axis(field, k.smoothing, true), k.derivative, false);
  Plane<double> mag(field.height(), field.width());
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(gx[i], gy[i]);
  return mag;
}

double grad_metric(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region) {
  const auto keep = region_pixels(pred, gt, region, "Grad");
  const Plane<double> mp = gradient_magnitude(pred.plane());
  const Plane<double> mg = gradient_magnitude(gt.plane());
  double total = 0.0;
  for (std::size_t i = 0; i < mp.size(); ++i) {
    if (keep[i]) total += (mp[i] - mg[i]) * (mp[i] - mg[i]);
  }
  return total;
}

Plane<double> connectivity_levels(const AlphaMatte& pred, const AlphaMatte& gt, double step) {
  require_same_extent(pred, gt, "prediction vs ground truth");
  if (!(step > 0.0 && step <= 1.0)) throw DomainError("connectivity step must lie in (0, 1]");
  const int h = pred.height(), w = pred.width();
  const int steps = static_cast<int>(std::lround(1.0 / step));
  Plane<double> level(h, w, -1.0);
  cv::Mat both(h, w, CV_8UC1), labels;
  for (int i = 1; i <= steps; ++i) {
    const double theta = i * step;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) both.at<std::uint8_t>(y, x) = pred(y, x) >= theta && gt(y, x) >= theta;
    }
    const int n = cv::connectedComponents(both, labels, 4, CV_32S);
    // Largest component; the first one wins ties.
    std::vector<int> sizes(static_cast<std::size_t>(n), 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) ++sizes[static_cast<std::size_t>(labels.at<int>(y, x))];
    }
    int largest = 0;
    for (int c = 1; c < n; ++c) {
      if (largest == 0 || sizes[static_cast<std::size_t>(c)] > sizes[static_cast<std::size_t>(largest)]) largest = c;
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool in_source = largest != 0 && labels.at<int>(y, x) == largest;
        if (level(y, x) == -1.0 && !in_source) level(y, x) = (i - 1) * step;
      }
    }
  }
  for (double& l : level.values()) {
    if (l == -1.0) l = 1.0;
  }
  return level;
}

double conn_metric(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region) {
  const auto keep = region_pixels(pred, gt, region, "Conn");
  const Plane<double> level = connectivity_levels(pred, gt);
  auto phi = [](double a, double l) {
    const double d = a - l;
    return 1.0 - (d >= kConnPhiCutoff ? d : 0.0);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (keep[i]) total += std::abs(phi(pred[i], level[i]) - phi(gt[i], level[i]));
  }
  return total;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_extent(a, b, "IoU masks");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] & b[i];
    uni += a[i] | b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  require_same_extent(a, b, "Dice masks");
  std::size_t inter = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] & b[i];
    total += a[i] + b[i];
  }
  return total == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

namespace {

double mean_distance(std::span<const BinaryMask> a, std::span<const BinaryMask> b) {
  double total = 0.0;
  for (const BinaryMask& x : a) {
    for (const BinaryMask& y : b) total += 1.0 - iou(x, y);
  }
  return total / static_cast<double>(a.size() * b.size());
}

}  // namespace

double ged(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt) {
  require_mask_set(pred, "predicted");
  require_mask_set(gt, "target");
  require_same_extent(pred.front(), gt.front(), "predicted vs target masks");
  return 2.0 * mean_distance(pred, gt) - mean_distance(pred, pred) - mean_distance(gt, gt);
}

double adapted_dice(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt) {
  require_mask_set(pred, "predicted");
  require_mask_set(gt, "target");
  require_same_extent(pred.front(), gt.front(), "predicted vs target masks");
  double total = 0.0;
  for (const BinaryMask& p : pred) {
    double best = 0.0;
    for (const BinaryMask& g : gt) best = std::max(best, dice(p, g));
    total += best;
  }
  return total / static_cast<double>(pred.size());
}

MetricReport matting_report(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region) {
  return {sad(pred, gt, region) * kReportScale, mse(pred, gt, region), grad_metric(pred, gt, region) * kReportScale,
          conn_metric(pred, gt, region) * kReportScale, region.has_value()};
}

}  // namespace medmat::metrics
