#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medmat/core/image.hpp"
#include "medmat/nn/layers.hpp"

namespace medmat::maskgen {

/// Shape of the probabilistic U-Net. Stage s has base_channels * 2^s
/// channels; input extents must be divisible by 2^(depth-1).
struct BackboneConfig {
  int in_channels = 1;
  int depth = 4;
  int base_channels = 16;
  int latent_dim = 6;
  int class_count = 2;
  int convs_per_stage = 2;
  int fcomb_layers = 3;

  void validate() const;
  int stage_channels(int stage) const { return base_channels << stage; }
  bool operator==(const BackboneConfig&) const = default;
};

/// Diagonal Gaussian over the latent space.
struct GaussianLatent {
  std::vector<double> mean;
  std::vector<double> log_variance;

  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;
};

struct LatentVars {
  nn::Var mean;          // (L, 1, 1)
  nn::Var log_variance;  // (L, 1, 1)

  GaussianLatent values() const;
};

/// N score maps, each (C, H, W) with a categorical distribution per pixel.
struct ScoreMapSet {
  std::vector<Tensor> maps;

  int count() const { return static_cast<int>(maps.size()); }
  int classes() const { return maps.empty() ? 0 : maps.front().channels(); }
  /// Throws DomainError unless every pixel is nonnegative and sums to one
  /// within `tolerance`.
  void validate(double tolerance = 1e-5) const;
};

struct UncertaintyMap {
  UncertaintyField values;
  int source_n = 0;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Per-class mean over the N maps.
Tensor mean_scores(const ScoreMapSet& scores);

/// Entropy (nats) of the mean score map at every pixel.
UncertaintyMap uncertainty_map(const ScoreMapSet& scores);

/// ln C, the upper bound of uncertainty_map.
double max_entropy(int classes);

/// Foreground (class 1) wherever it has the largest probability.
std::vector<BinaryMask> binarize(const ScoreMapSet& scores);

/// Image -> Tensor, checking channel count and size divisibility.
Tensor image_input(const Image& image, const BackboneConfig& config);

class Encoder {
 public:
  Encoder() = default;
  Encoder(int in_channels, const BackboneConfig& config, nn::Rng& rng);

  /// Activations at the end of each stage, finest first.
  std::vector<nn::Var> operator()(nn::Tape& tape, nn::Var x) const;
  void collect(const std::string& prefix, nn::ParamList& out);

 private:
  std::vector<std::vector<nn::Conv2d>> stages_;
};

/// Conditional-VAE segmentation network: a U-Net, a prior net on the image,
/// a posterior net on image plus mask, and a fusion head that combines U-Net
/// features with a broadcast latent sample.
class ProbUnet {
 public:
  ProbUnet() = default;
  ProbUnet(BackboneConfig config, std::uint64_t init_seed);

  bool initialized() const { return initialized_; }
  const BackboneConfig& config() const { return config_; }
  int feature_channels() const { return config_.base_channels; }

  GaussianLatent prior_encode(const Image& image) const;
  GaussianLatent posterior_encode(const Image& image, const BinaryMask& mask) const;
  /// Last decoder activations before the fusion head, (base_channels, H, W).
  Tensor latent_features(const Image& image) const;

  /// n score maps from z ~ prior(image).
  ScoreMapSet sample_masks(const Image& image, int n, std::uint64_t seed) const;
  /// n score maps from z ~ latent on precomputed features. A log-variance of
  /// -inf collapses every draw onto the mean.
  ScoreMapSet sample_masks(const Tensor& features, const GaussianLatent& latent, int n,
                           std::uint64_t seed) const;

  nn::Var features(nn::Tape& tape, nn::Var image) const;
  LatentVars prior(nn::Tape& tape, nn::Var image) const;
  LatentVars posterior(nn::Tape& tape, nn::Var image, nn::Var mask) const;
  /// Softmax score map for latent z (L, 1, 1).
  nn::Var decode(nn::Tape& tape, nn::Var features, nn::Var z) const;

  /// mean + exp(log_variance / 2) * noise.
  static nn::Var reparameterize(const LatentVars& latent, std::span<const double> noise);
  static std::vector<double> draw_noise(int dim, nn::Rng& rng);

  nn::ParamList parameters();

  nn::Linear& prior_head() { return prior_head_; }
  nn::Linear& posterior_head() { return posterior_head_; }
  std::vector<nn::Conv2d>& fusion_head() { return fcomb_; }

 private:
  void require_initialized() const;
  LatentVars split_latent(nn::Var projected) const;

  BackboneConfig config_;
  bool initialized_ = false;
  Encoder unet_encoder_;
  std::vector<std::vector<nn::Conv2d>> decoder_;  // finest level last
  Encoder prior_encoder_;
  Encoder posterior_encoder_;
  nn::Linear prior_head_;
  nn::Linear posterior_head_;
  std::vector<nn::Conv2d> fcomb_;
};

}  // namespace medmat::maskgen
