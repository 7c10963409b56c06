#include "medmat/maskgen/prob_unet.hpp"

#include <cmath>

#include <fmt/format.h>

#include "medmat/core/entropy.hpp"
#include "medmat/core/error.hpp"
#include "medmat/nn/ops.hpp"

namespace medmat::maskgen {

using nn::Tape;
using nn::Var;

void BackboneConfig::validate() const {
  if (in_channels != 1 && in_channels != 3) throw ConfigError("backbone in_channels must be 1 or 3");
  if (depth < 2) throw ConfigError(fmt::format("backbone depth must be >= 2, got {}", depth));
  if (base_channels < 4) throw ConfigError(fmt::format("base_channels must be >= 4, got {}", base_channels));
  if (latent_dim < 2) throw ConfigError(fmt::format("latent_dim must be >= 2, got {}", latent_dim));
  if (class_count < 2) throw ConfigError("class_count must be >= 2");
  if (convs_per_stage < 1) throw ConfigError("convs_per_stage must be >= 1");
  if (fcomb_layers < 1) throw ConfigError("fcomb_layers must be >= 1");
}

void GaussianLatent::validate() const {
  if (mean.size() != log_variance.size()) throw ShapeError("latent mean / log-variance length mismatch");
}

GaussianLatent LatentVars::values() const {
  const auto m = mean.value().values();
  const auto v = log_variance.value().values();
  return {{m.begin(), m.end()}, {v.begin(), v.end()}};
}

void ScoreMapSet::validate(double tolerance) const {
  if (maps.empty()) throw ArityError("score map set is empty");
  const Shape s = maps.front().shape();
  for (const Tensor& m : maps) {
    require_same_shape(m.shape(), s, "score maps");
    for (std::size_t p = 0; p < s.plane(); ++p) {
      double total = 0.0;
      for (int c = 0; c < s.channels; ++c) {
        const double v = m[c * s.plane() + p];
        if (!(v >= 0.0)) throw DomainError("negative class probability");
        total += v;
      }
      if (std::abs(total - 1.0) > tolerance) {
        throw DomainError(fmt::format("class probabilities sum to {}", total));
      }
    }
  }
}

Tensor mean_scores(const ScoreMapSet& scores) {
  if (scores.maps.empty()) throw ArityError("score map set is empty");
  Tensor mean(scores.maps.front().shape());
  for (const Tensor& m : scores.maps) mean += m;
  mean *= 1.0 / scores.count();
  return mean;
}

UncertaintyMap uncertainty_map(const ScoreMapSet& scores) {
  const Tensor mean = mean_scores(scores);
  const Shape s = mean.shape();
  Plane<double> u(s.height, s.width);
  std::vector<double> probs(static_cast<std::size_t>(s.channels));
  for (std::size_t p = 0; p < s.plane(); ++p) {
    for (int c = 0; c < s.channels; ++c) probs[c] = mean[c * s.plane() + p];
    u[p] = categorical_entropy(probs, kProbabilityFloor);
  }
  return {UncertaintyField(std::move(u)), scores.count()};
}

double max_entropy(int classes) { return std::log(static_cast<double>(classes)); }

std::vector<BinaryMask> binarize(const ScoreMapSet& scores) {
  std::vector<BinaryMask> masks;
  for (const Tensor& m : scores.maps) {
    BinaryMask mask(m.height(), m.width());
    const std::size_t plane = m.shape().plane();
    for (std::size_t p = 0; p < plane; ++p) {
      bool fg = true;
      for (int c = 0; c < m.channels(); ++c) {
        if (c != 1 && m[c * plane + p] >= m[plane + p]) fg = false;
      }
      mask.set(p, fg);
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

Tensor image_input(const Image& image, const BackboneConfig& config) {
  if (image.channels() != config.in_channels) {
    throw ShapeError(fmt::format("model expects {} image channels, got {}", config.in_channels, image.channels()));
  }
  const int factor = 1 << (config.depth - 1);
  if (image.height() % factor != 0 || image.width() % factor != 0) {
    throw ShapeError(fmt::format("image extent {}x{} not divisible by {}", image.height(), image.width(), factor));
  }
  return image.pixels();
}

Encoder::Encoder(int in_channels, const BackboneConfig& config, nn::Rng& rng) {
  int channels = in_channels;
  for (int s = 0; s < config.depth; ++s) {
    std::vector<nn::Conv2d> convs;
    for (int k = 0; k < config.convs_per_stage; ++k) {
      convs.emplace_back(channels, config.stage_channels(s), 3, rng);
      channels = config.stage_channels(s);
    }
    stages_.push_back(std::move(convs));
  }
}

std::vector<Var> Encoder::operator()(Tape& tape, Var x) const {
  std::vector<Var> outputs;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) x = nn::avg_pool2(x);
    for (const nn::Conv2d& conv : stages_[s]) x = nn::relu(conv(tape, x));
    outputs.push_back(x);
  }
  return outputs;
}

void Encoder::collect(const std::string& prefix, nn::ParamList& out) {
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t k = 0; k < stages_[s].size(); ++k) {
      stages_[s][k].collect(fmt::format("{}.stage{}.conv{}", prefix, s, k), out);
    }
  }
}

ProbUnet::ProbUnet(BackboneConfig config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  nn::Rng rng(init_seed);
  unet_encoder_ = Encoder(config_.in_channels, config_, rng);
  for (int s = config_.depth - 2; s >= 0; --s) {
    std::vector<nn::Conv2d> convs;
    int channels = config_.stage_channels(s + 1) + config_.stage_channels(s);
    for (int k = 0; k < config_.convs_per_stage; ++k) {
      convs.emplace_back(channels, config_.stage_channels(s), 3, rng);
      channels = config_.stage_channels(s);
    }
    decoder_.push_back(std::move(convs));
  }
  const int top = config_.stage_channels(config_.depth - 1);
  prior_encoder_ = Encoder(config_.in_channels, config_, rng);
  posterior_encoder_ = Encoder(config_.in_channels + 1, config_, rng);
  prior_head_ = nn::Linear(top, 2 * config_.latent_dim, rng);
  posterior_head_ = nn::Linear(top, 2 * config_.latent_dim, rng);

  int channels = config_.base_channels + config_.latent_dim;
  for (int k = 0; k < config_.fcomb_layers; ++k) {
    const bool last = k + 1 == config_.fcomb_layers;
    const int out = last ? config_.class_count : config_.base_channels;
    fcomb_.emplace_back(channels, out, 1, rng);
    channels = out;
  }
  initialized_ = true;
}

void ProbUnet::require_initialized() const {
  if (!initialized_) throw StateError("mask generator used before initialisation");
}

Var ProbUnet::features(Tape& tape, Var image) const {
  require_initialized();
  std::vector<Var> skips = unet_encoder_(tape, image);
  Var x = skips.back();
  int level = config_.depth - 2;
  for (const auto& convs : decoder_) {
    x = nn::concat({nn::upsample2(x), skips[static_cast<std::size_t>(level)]});
    for (const nn::Conv2d& conv : convs) x = nn::relu(conv(tape, x));
    --level;
  }
  return x;
}

LatentVars ProbUnet::split_latent(Var projected) const {
  return {nn::slice_channels(projected, 0, config_.latent_dim),
          nn::slice_channels(projected, config_.latent_dim, config_.latent_dim)};
}

LatentVars ProbUnet::prior(Tape& tape, Var image) const {
  require_initialized();
  Var pooled = nn::global_avg_pool(prior_encoder_(tape, image).back());
  return split_latent(prior_head_(tape, pooled));
}

LatentVars ProbUnet::posterior(Tape& tape, Var image, Var mask) const {
  require_initialized();
  Var pooled = nn::global_avg_pool(posterior_encoder_(tape, nn::concat({image, mask})).back());
  return split_latent(posterior_head_(tape, pooled));
}

Var ProbUnet::decode(Tape& tape, Var features, Var z) const {
  require_initialized();
  const Shape fs = features.shape();
  Var x = nn::concat({features, nn::broadcast_spatial(z, fs.height, fs.width)});
  for (std::size_t k = 0; k < fcomb_.size(); ++k) {
    x = fcomb_[k](tape, x);
    if (k + 1 < fcomb_.size()) x = nn::relu(x);
  }
  return nn::softmax_channels(x);
}

Var ProbUnet::reparameterize(const LatentVars& latent, std::span<const double> noise) {
  Tape& tape = latent.mean.tape();
  const Shape s = latent.mean.shape();
  if (noise.size() != s.size()) throw ShapeError("noise length does not match latent dimension");
  Var eps = tape.constant(Tensor(s, std::vector<double>(noise.begin(), noise.end())));
  Var std_dev = nn::exp(nn::scale(latent.log_variance, 0.5));
  return nn::add(latent.mean, nn::mul(std_dev, eps));
}

std::vector<double> ProbUnet::draw_noise(int dim, nn::Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(static_cast<std::size_t>(dim));
  for (double& e : eps) e = normal(rng);
  return eps;
}

GaussianLatent ProbUnet::prior_encode(const Image& image) const {
  require_initialized();
  Tape tape(false);
  return prior(tape, tape.constant(image_input(image, config_))).values();
}

GaussianLatent ProbUnet::posterior_encode(const Image& image, const BinaryMask& mask) const {
  require_initialized();
  require_same_extent(image, mask, "image vs mask");
  Tape tape(false);
  return posterior(tape, tape.constant(image_input(image, config_)), tape.constant(mask.to_tensor())).values();
}

Tensor ProbUnet::latent_features(const Image& image) const {
  require_initialized();
  Tape tape(false);
  return features(tape, tape.constant(image_input(image, config_))).value();
}

ScoreMapSet ProbUnet::sample_masks(const Image& image, int n, std::uint64_t seed) const {
  if (n < 1) throw ArityError(fmt::format("sample_masks needs n >= 1, got {}", n));
  require_initialized();
  Tape tape(false);
  Var input = tape.constant(image_input(image, config_));
  const Tensor feats = features(tape, input).value();
  return sample_masks(feats, prior(tape, input).values(), n, seed);
}

ScoreMapSet ProbUnet::sample_masks(const Tensor& features, const GaussianLatent& latent, int n,
                                   std::uint64_t seed) const {
  if (n < 1) throw ArityError(fmt::format("sample_masks needs n >= 1, got {}", n));
  require_initialized();
  latent.validate();
  if (latent.dim() != config_.latent_dim) throw ShapeError("latent dimension does not match the backbone");
  nn::Rng rng(seed);
  Tape tape(false);
  Var feats = tape.constant(features);
  ScoreMapSet out;
  for (int i = 0; i < n; ++i) {
    const std::vector<double> eps = draw_noise(latent.dim(), rng);
    Tensor z({latent.dim(), 1, 1});
    for (int k = 0; k < latent.dim(); ++k) {
      const double sd = std::exp(0.5 * latent.log_variance[k]);
      z[k] = latent.mean[k] + (sd == 0.0 ? 0.0 : sd * eps[k]);
    }
    out.maps.push_back(decode(tape, feats, tape.constant(std::move(z))).value());
  }
  return out;
}

nn::ParamList ProbUnet::parameters() {
  require_initialized();
  nn::ParamList out;
  unet_encoder_.collect("maskgen.unet.encoder", out);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    for (std::size_t k = 0; k < decoder_[l].size(); ++k) {
      decoder_[l][k].collect(fmt::format("maskgen.unet.decoder{}.conv{}", l, k), out);
    }
  }
  prior_encoder_.collect("maskgen.prior.encoder", out);
  prior_head_.collect("maskgen.prior.head", out);
  posterior_encoder_.collect("maskgen.posterior.encoder", out);
  posterior_head_.collect("maskgen.posterior.head", out);
  for (std::size_t k = 0; k < fcomb_.size(); ++k) fcomb_[k].collect(fmt::format("maskgen.fcomb.conv{}", k), out);
  return out;
}

}  // namespace medmat::maskgen
