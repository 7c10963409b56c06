#pragma once

#include <optional>
#include <span>
#include <vector>

#include "medmat/core/image.hpp"

namespace medmat::metrics {

inline constexpr double kReportScale = 1e-3;
inline constexpr double kGradSigma = 1.4;
inline constexpr double kConnStep = 0.1;
inline constexpr double kConnPhiCutoff = 0.15;

/// Region masks select the pixels that are scored; std::nullopt scores the
/// whole image. An empty region throws DegenerateInputError.
using Region = std::optional<BinaryMask>;

double sad(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region = std::nullopt);
double mse(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region = std::nullopt);

/// Normalised first-derivative-of-Gaussian kernel taps (derivative and
/// smoothing halves of the separable filter).
struct GaussianDerivative {
  std::vector<double> derivative;
  std::vector<double> smoothing;
  int halfsize = 0;
};
GaussianDerivative gaussian_derivative(double sigma);

/// Gradient magnitude under the separable Gaussian-derivative filter with
/// replicate padding.
Plane<double> gradient_magnitude(const Plane<double>& field, double sigma = kGradSigma);

/// Sum over the region of (|grad pred| - |grad gt|)^2.
double grad_metric(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region = std::nullopt);

/// Per-pixel threshold at which the pixel leaves the largest 4-connected
/// component of {pred >= theta and gt >= theta}; 1 if it never does.
Plane<double> connectivity_levels(const AlphaMatte& pred, const AlphaMatte& gt, double step = kConnStep);

/// Sum over the region of |phi(pred) - phi(gt)| with
/// phi(a) = 1 - (a - l) * [a - l >= 0.15].
double conn_metric(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region = std::nullopt);

/// IoU and Dice with the empty/empty convention of 1.
double iou(const BinaryMask& a, const BinaryMask& b);
double dice(const BinaryMask& a, const BinaryMask& b);

/// 2 E[d(p, g)] - E[d(p, p')] - E[d(g, g')] with d = 1 - IoU; every
/// expectation is a mean over all ordered pairs, self-pairs included.
double ged(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt);

/// Mean over predicted masks of the best Dice against any target.
double adapted_dice(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt);

/// SAD, Grad and Conn are stored multiplied by kReportScale.
struct MetricReport {
  double sad = 0.0;
  double mse = 0.0;
  double grad = 0.0;
  double conn = 0.0;
  bool region_restricted = false;
};

MetricReport matting_report(const AlphaMatte& pred, const AlphaMatte& gt, const Region& region = std::nullopt);

/// Published figures for the full method, kept for report formatting.
namespace reference {
struct Row {
  const char* dataset;
  double sad, mse, grad, conn;
};
inline constexpr Row kMedicalMatting[] = {
    {"LIDC-IDRI", 0.0447, 0.0215, 0.0607, 0.0378},
    {"ISIC", 1.0330, 0.0093, 0.1729, 0.4989},
    {"Brain-growth", 0.4023, 0.0451, 0.5572, 0.4255},
};
}  // namespace reference

}  // namespace medmat::metrics
