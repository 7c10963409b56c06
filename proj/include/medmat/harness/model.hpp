#pragma once

#include <cstdint>
#include <filesystem>

#include "medmat/harness/config.hpp"
#include "medmat/losses/losses.hpp"
#include "medmat/maskgen/prob_unet.hpp"
#include "medmat/mattingnet/matting_net.hpp"

namespace medmat::harness {

inline constexpr const char* kCheckpointFormat = "medmat-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Mask generator, matting network and the trainable task weights.
struct Model {
  maskgen::ProbUnet maskgen;
  mattingnet::MattingNet matting;
  losses::UwsState uws;

  /// Every trainable tensor, keyed "maskgen.*", "matting.*" and
  /// "uws.log_sigma". The task weights are exempt from weight decay.
  nn::ParamList parameters();
};

/// Weights drawn from seeds derived from config.seed.
Model build_model(const TrainConfig& config);

/// The archive carries the resolved config, so load_checkpoint rebuilds
/// the architecture before restoring the weights. `model` is only read.
void save_checkpoint(const std::filesystem::path& path, Model& model, const TrainConfig& config);
Model load_checkpoint(const std::filesystem::path& path, TrainConfig* config = nullptr);

struct Prediction {
  AlphaMatte alpha;
  maskgen::UncertaintyMap umap;
  maskgen::ScoreMapSet scores;
};

/// Prior samples -> uncertainty map -> alpha. With `use_uncertainty`
/// false the matting network sees an all-zero map (the returned umap is
/// still the real one).
Prediction infer(const Model& model, const Image& image, int n_samples, std::uint64_t seed,
                 bool use_uncertainty = true);

}  // namespace medmat::harness
