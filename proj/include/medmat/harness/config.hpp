#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "medmat/fusion/fusion.hpp"
#include "medmat/losses/losses.hpp"
#include "medmat/maskgen/prob_unet.hpp"
#include "medmat/mattingnet/matting_net.hpp"

namespace medmat::harness {

enum class Strategy { None, Uws, Oaws };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

struct AugmentConfig {
  bool enabled = true;
  double flip_probability = 0.5;
  double max_rotation_deg = 15.0;
  double elastic_sigma = 10.0;
  double elastic_magnitude = 2.0;

  bool operator==(const AugmentConfig&) const = default;
};

struct TrainConfig {
  std::string dataset = "synthetic";
  double base_lr = 1e-3;
  int epochs = 200;
  int input_size = 32;
  int batch_size = 8;
  double weight_decay = 5e-5;
  double momentum = 0.9;
  int warmup_epochs = 1;
  losses::LossWeights weights;
  Strategy strategy = Strategy::None;
  losses::OawsSchedule oaws;
  double grad_region_threshold = losses::kDefaultRegionThreshold;
  int n_samples = 8;
  int eval_targets = 8;
  int folds = 4;
  std::uint64_t seed = 0;
  // Ablation switch: false feeds the matting network an all-zero map.
  bool use_uncertainty = true;
  double pseudo_lo = 0.2;
  double pseudo_hi = 0.7;
  AugmentConfig augment;

  // Synthetic data generation.
  int synth_count = 64;
  int annotators = 4;
  double noise_sigma = 0.02;
  int dilation_radius = fusion::kDefaultDilationRadius;

  maskgen::BackboneConfig backbone;
  mattingnet::MattingConfig matting;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Named starting points: "synthetic", "lidc", "isic", "brain" and "tiny"
/// (a minimal model for smoke tests).
TrainConfig preset(std::string_view name);

/// key = value text. A `preset` key selects the base configuration; every
/// other key overrides one field. Unknown keys throw ConfigError.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// Every field, in a form parse_config reads back exactly.
std::string format_config(const TrainConfig& config);
void save_config(const std::filesystem::path& path, const TrainConfig& config);

}  // namespace medmat::harness
