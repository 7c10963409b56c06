#include "medmat/losses/losses.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "medmat/core/error.hpp"
#include "medmat/nn/ops.hpp"

namespace medmat::losses {

using nn::Tape;
using nn::Var;

namespace {

constexpr double kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr double kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

void check_score(const Shape& score, const BinaryMask& pseudo) {
  if (score.channels != 2) throw ShapeError(fmt::format("cross-entropy expects 2 classes, got {}", score.channels));
  if (score.height != pseudo.height() || score.width != pseudo.width()) {
    throw ShapeError(fmt::format("score map {} vs mask {}x{}", score.str(), pseudo.height(), pseudo.width()));
  }
}

void check_alpha(const Shape& pred, const AlphaMatte& gt) {
  if (pred.channels != 1 || pred.height != gt.height() || pred.width != gt.width()) {
    throw ShapeError(fmt::format("alpha prediction {} vs ground truth {}x{}", pred.str(), gt.height(), gt.width()));
  }
}

double sobel_at(const double* f, int h, int w, int y, int x, const double (&k)[3][3]) {
  double acc = 0.0;
  for (int ky = 0; ky < 3; ++ky) {
    const int sy = std::clamp(y + ky - 1, 0, h - 1);
    for (int kx = 0; kx < 3; ++kx) {
      const int sx = std::clamp(x + kx - 1, 0, w - 1);
      acc += k[ky][kx] * f[static_cast<std::size_t>(sy) * w + sx];
    }
  }
  return acc;
}

// Adds c * K^T at pixel (y, x), the adjoint of sobel_at.
void sobel_scatter(double* f, int h, int w, int y, int x, const double (&k)[3][3], double c) {
  for (int ky = 0; ky < 3; ++ky) {
    const int sy = std::clamp(y + ky - 1, 0, h - 1);
    for (int kx = 0; kx < 3; ++kx) {
      const int sx = std::clamp(x + kx - 1, 0, w - 1);
      f[static_cast<std::size_t>(sy) * w + sx] += c * k[ky][kx];
    }
  }
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<std::uint8_t> region_of(const UncertaintyField& umap, double threshold) {
  if (!(threshold >= 0.0)) throw DomainError(fmt::format("region threshold must be >= 0, got {}", threshold));
  std::vector<std::uint8_t> region(umap.size());
  for (std::size_t i = 0; i < umap.size(); ++i) region[i] = umap[i] > threshold;
  return region;
}

// Returns the loss and, when `grad` is given, d(loss)/d(pred).
double grad_loss_impl(const double* pred, const AlphaMatte& gt, const std::vector<std::uint8_t>& region, int h,
                      int w, double* grad) {
  std::vector<double> diff(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = pred[i] - gt[i];
  std::size_t count = 0;
  for (std::uint8_t r : region) count += r;
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!region[static_cast<std::size_t>(y) * w + x]) continue;
      const double gx = sobel_at(diff.data(), h, w, y, x, kSobelX);
      const double gy = sobel_at(diff.data(), h, w, y, x, kSobelY);
      total += std::abs(gx) + std::abs(gy);
      if (grad != nullptr) {
        sobel_scatter(grad, h, w, y, x, kSobelX, sign(gx) * inv);
        sobel_scatter(grad, h, w, y, x, kSobelY, sign(gy) * inv);
      }
    }
  }
  return total * inv;
}

}  // namespace

double ce_loss(const Tensor& score, const BinaryMask& pseudo) {
  check_score(score.shape(), pseudo);
  const std::size_t plane = score.shape().plane();
  double total = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    total -= std::log(std::max(score[pseudo[i] * plane + i], kLogFloor));
  }
  return total / static_cast<double>(plane);
}

Var ce_loss(Var score, const BinaryMask& pseudo) {
  check_score(score.shape(), pseudo);
  const double value = ce_loss(score.value(), pseudo);
  return score.tape().record(Tensor({1, 1, 1}, value), {score}, [score, pseudo](Tape& t, const Tensor& g) {
    Tensor* gs = t.grad_sink(score);
    const Tensor& p = score.value();
    const std::size_t plane = p.shape().plane();
    const double scale = g[0] / static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = pseudo[i] * plane + i;
      if (p[k] > kLogFloor) (*gs)[k] -= scale / p[k];
    }
  });
}

double kl_loss(const maskgen::GaussianLatent& q, const maskgen::GaussianLatent& p) {
  q.validate();
  p.validate();
  if (q.dim() != p.dim()) throw ShapeError(fmt::format("KL between latents of dimension {} and {}", q.dim(), p.dim()));
  double total = 0.0;
  for (int k = 0; k < q.dim(); ++k) {
    const double d = q.mean[k] - p.mean[k];
    total += 0.5 * (p.log_variance[k] - q.log_variance[k] +
                    (std::exp(q.log_variance[k]) + d * d) * std::exp(-p.log_variance[k]) - 1.0);
  }
  return total;
}

Var kl_loss(const maskgen::LatentVars& q, const maskgen::LatentVars& p) {
  if (q.mean.shape() != p.mean.shape()) throw ShapeError("KL between latents of different dimension");
  const double value = kl_loss(q.values(), p.values());
  const std::initializer_list<Var> inputs{q.mean, q.log_variance, p.mean, p.log_variance};
  return q.mean.tape().record(Tensor({1, 1, 1}, value), inputs, [q, p](Tape& t, const Tensor& g) {
    const Tensor& mq = q.mean.value();
    const Tensor& lq = q.log_variance.value();
    const Tensor& mp = p.mean.value();
    const Tensor& lp = p.log_variance.value();
    Tensor* gmq = t.grad_sink(q.mean);
    Tensor* glq = t.grad_sink(q.log_variance);
    Tensor* gmp = t.grad_sink(p.mean);
    Tensor* glp = t.grad_sink(p.log_variance);
    for (std::size_t k = 0; k < mq.size(); ++k) {
      const double inv_vp = std::exp(-lp[k]);
      const double d = mq[k] - mp[k];
      if (gmq) (*gmq)[k] += g[0] * d * inv_vp;
      if (gmp) (*gmp)[k] -= g[0] * d * inv_vp;
      if (glq) (*glq)[k] += g[0] * 0.5 * (std::exp(lq[k]) * inv_vp - 1.0);
      if (glp) (*glp)[k] += g[0] * 0.5 * (1.0 - (std::exp(lq[k]) + d * d) * inv_vp);
    }
  });
}

double alpha_l1(const AlphaMatte& pred, const AlphaMatte& gt) {
  require_same_extent(pred, gt, "alpha prediction vs ground truth");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - gt[i]);
  return total / static_cast<double>(pred.size());
}

Var alpha_l1(Var pred, const AlphaMatte& gt) {
  check_alpha(pred.shape(), gt);
  const Tensor& p = pred.value();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - gt[i]);
  const double n = static_cast<double>(p.size());
  return pred.tape().record(Tensor({1, 1, 1}, total / n), {pred}, [pred, gt, n](Tape& t, const Tensor& g) {
    Tensor* gp = t.grad_sink(pred);
    const Tensor& v = pred.value();
    for (std::size_t i = 0; i < v.size(); ++i) (*gp)[i] += g[0] * sign(v[i] - gt[i]) / n;
  });
}

SobelResponse sobel(const Plane<double>& field) {
  const int h = field.height(), w = field.width();
  SobelResponse r{Plane<double>(h, w), Plane<double>(h, w)};
  const double* f = field.values().data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      r.gx(y, x) = sobel_at(f, h, w, y, x, kSobelX);
      r.gy(y, x) = sobel_at(f, h, w, y, x, kSobelY);
    }
  }
  return r;
}

double grad_loss(const AlphaMatte& pred, const UncertaintyField& umap, const AlphaMatte& gt,
                 double region_threshold) {
  require_same_extent(pred, gt, "alpha prediction vs ground truth");
  require_same_extent(pred, umap, "alpha prediction vs uncertainty map");
  const auto region = region_of(umap, region_threshold);
  return grad_loss_impl(pred.values().data(), gt, region, pred.height(), pred.width(), nullptr);
}

Var grad_loss(Var pred, const UncertaintyField& umap, const AlphaMatte& gt, double region_threshold) {
  check_alpha(pred.shape(), gt);
  require_same_extent(gt, umap, "ground truth vs uncertainty map");
  auto region = region_of(umap, region_threshold);
  const int h = gt.height(), w = gt.width();
  const double value = grad_loss_impl(pred.value().data(), gt, region, h, w, nullptr);
  return pred.tape().record(Tensor({1, 1, 1}, value), {pred},
                            [pred, gt, region = std::move(region), h, w](Tape& t, const Tensor& g) {
                              Tensor local({1, h, w});
                              grad_loss_impl(pred.value().data(), gt, region, h, w, local.data());
                              Tensor* gp = t.grad_sink(pred);
                              for (std::size_t i = 0; i < local.size(); ++i) (*gp)[i] += g[0] * local[i];
                            });
}

void LossWeights::validate() const {
  for (double v : {mu, upsilon, zeta, xi}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and nonnegative");
  }
}

double seg_loss(double ce, double kl, const LossWeights& w) { return w.mu * ce + w.upsilon * kl; }

double matt_loss(double l_alpha, double l_grad, const LossWeights& w) { return w.zeta * l_alpha + w.xi * l_grad; }

Var seg_loss(Var ce, Var kl, const LossWeights& w) { return nn::add(nn::scale(ce, w.mu), nn::scale(kl, w.upsilon)); }

Var matt_loss(Var l_alpha, Var l_grad, const LossWeights& w) {
  return nn::add(nn::scale(l_alpha, w.zeta), nn::scale(l_grad, w.xi));
}

UwsState::UwsState() : log_sigma({2, 1, 1}, std::log(kInitialSigma)) {}

UwsState UwsState::from_sigmas(double sigma1, double sigma2) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) {
    throw DomainError(fmt::format("task sigmas must be positive, got {} and {}", sigma1, sigma2));
  }
  UwsState s;
  s.log_sigma[0] = std::log(sigma1);
  s.log_sigma[1] = std::log(sigma2);
  return s;
}

double UwsState::sigma1() const { return std::exp(log_sigma[0]); }
double UwsState::sigma2() const { return std::exp(log_sigma[1]); }

double uws_total(double seg, double matt, const UwsState& state) {
  const double s1 = state.log_sigma[0], s2 = state.log_sigma[1];
  return seg * std::exp(-2.0 * s1) + 0.5 * matt * std::exp(-2.0 * s2) + s1 + s2;
}

Var uws_total(Var seg, Var matt, Var log_sigma) {
  if (log_sigma.shape().size() != 2) throw ShapeError("uws state must hold two log-sigmas");
  const double s1 = log_sigma.value()[0], s2 = log_sigma.value()[1];
  const double a = seg.value()[0], b = matt.value()[0];
  const double value = a * std::exp(-2.0 * s1) + 0.5 * b * std::exp(-2.0 * s2) + s1 + s2;
  return seg.tape().record(Tensor({1, 1, 1}, value), {seg, matt, log_sigma},
                           [seg, matt, log_sigma](Tape& t, const Tensor& g) {
                             const double s1 = log_sigma.value()[0], s2 = log_sigma.value()[1];
                             const double w1 = std::exp(-2.0 * s1), w2 = 0.5 * std::exp(-2.0 * s2);
                             if (Tensor* gs = t.grad_sink(seg)) (*gs)[0] += g[0] * w1;
                             if (Tensor* gm = t.grad_sink(matt)) (*gm)[0] += g[0] * w2;
                             if (Tensor* gl = t.grad_sink(log_sigma)) {
                               (*gl)[0] += g[0] * (1.0 - 2.0 * seg.value()[0] * w1);
                               (*gl)[1] += g[0] * (1.0 - 2.0 * matt.value()[0] * w2);
                             }
                           });
}

void OawsSchedule::validate() const {
  if (!(a > 0.0)) throw ConfigError(fmt::format("oaws_a must be > 0, got {}", a));
  if (!(b > 0.0)) throw ConfigError(fmt::format("oaws_b must be > 0, got {}", b));
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError(fmt::format("oaws_t must lie in [0, 1], got {}", t));
}

double oaws_gamma(int epoch, const OawsSchedule& schedule) {
  if (epoch < 0) throw DomainError(fmt::format("epoch index must be >= 0, got {}", epoch));
  const double n = epoch;
  const double phase = schedule.phase == OawsPhase::Quadratic ? schedule.b * n * n : schedule.b * n;
  const double offset = 0.5 * std::exp(-schedule.a * n) * std::cos(phase);
  double gamma = schedule.t + offset;
  // Once the envelope falls below an ulp of t, round-to-nearest can land
  // outside it; step back toward t so the envelope holds in doubles too.
  // (gamma - t is exact here by Sterbenz.)
  if (std::abs(gamma - schedule.t) > std::abs(offset)) gamma = std::nextafter(gamma, schedule.t);
  return gamma;
}

double oaws_total(double seg, double matt, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError(fmt::format("oaws gamma {} outside [0, 1]", gamma));
  return gamma * seg + (1.0 - gamma) * matt;
}

Var oaws_total(Var seg, Var matt, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError(fmt::format("oaws gamma {} outside [0, 1]", gamma));
  return nn::add(nn::scale(seg, gamma), nn::scale(matt, 1.0 - gamma));
}

}  // namespace medmat::losses
