#pragma once

#include "medmat/core/image.hpp"
#include "medmat/maskgen/prob_unet.hpp"
#include "medmat/nn/tape.hpp"

namespace medmat::losses {

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kDefaultRegionThreshold = 0.1;

/// Mean pixelwise cross-entropy of a (C, H, W) score map against a binary
/// mask, one-hot encoded as class 0 = background and class 1 = foreground.
double ce_loss(const Tensor& score, const BinaryMask& pseudo);
nn::Var ce_loss(nn::Var score, const BinaryMask& pseudo);

/// KL(q || p) between diagonal Gaussians, summed over dimensions.
double kl_loss(const maskgen::GaussianLatent& q, const maskgen::GaussianLatent& p);
nn::Var kl_loss(const maskgen::LatentVars& q, const maskgen::LatentVars& p);

/// Mean absolute alpha error.
double alpha_l1(const AlphaMatte& pred, const AlphaMatte& gt);
nn::Var alpha_l1(nn::Var pred, const AlphaMatte& gt);

/// 3x3 Sobel responses with replicate padding.
struct SobelResponse {
  Plane<double> gx;
  Plane<double> gy;
};
SobelResponse sobel(const Plane<double>& field);

/// Mean over pixels with umap > threshold of |Sx(pred - gt)| + |Sy(pred - gt)|;
/// 0 when that region is empty.
double grad_loss(const AlphaMatte& pred, const UncertaintyField& umap, const AlphaMatte& gt,
                 double region_threshold = kDefaultRegionThreshold);
nn::Var grad_loss(nn::Var pred, const UncertaintyField& umap, const AlphaMatte& gt,
                  double region_threshold = kDefaultRegionThreshold);

struct LossWeights {
  double mu = 1.0;
  double upsilon = 10.0;
  double zeta = 1.0;
  double xi = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

double seg_loss(double ce, double kl, const LossWeights& w);
double matt_loss(double l_alpha, double l_grad, const LossWeights& w);
nn::Var seg_loss(nn::Var ce, nn::Var kl, const LossWeights& w);
nn::Var matt_loss(nn::Var l_alpha, nn::Var l_grad, const LossWeights& w);

/// Homoscedastic task weights. `log_sigma` is (2, 1, 1) holding
/// (log sigma1, log sigma2) and is trained like any other parameter.
struct UwsState {
  static constexpr double kInitialSigma = 4.0;

  Tensor log_sigma;

  UwsState();
  static UwsState from_sigmas(double sigma1, double sigma2);
  double sigma1() const;
  double sigma2() const;
};

/// seg / sigma1^2 + matt / (2 sigma2^2) + log(sigma1 sigma2).
double uws_total(double seg, double matt, const UwsState& state);
nn::Var uws_total(nn::Var seg, nn::Var matt, nn::Var log_sigma);

enum class OawsPhase { Quadratic, Linear };

/// gamma(n) = 0.5 exp(-a n) cos(phase(n)) + t with phase b n^2 (quadratic)
/// or b n (linear).
struct OawsSchedule {
  double a = 0.05;
  double b = 0.03;
  double t = 0.5;
  OawsPhase phase = OawsPhase::Quadratic;

  void validate() const;
  bool operator==(const OawsSchedule&) const = default;
};

double oaws_gamma(int epoch, const OawsSchedule& schedule);

/// gamma seg + (1 - gamma) matt; gamma must lie in [0, 1].
double oaws_total(double seg, double matt, double gamma);
nn::Var oaws_total(nn::Var seg, nn::Var matt, double gamma);

}  // namespace medmat::losses
