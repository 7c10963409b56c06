#pragma once

#include <cstdint>
#include <vector>

#include "medmat/core/image.hpp"
#include "medmat/nn/layers.hpp"

namespace medmat::mattingnet {

struct MattingConfig {
  int unit_count = 3;
  int blocks_per_unit = 3;
  std::vector<int> unit_channels{32, 32, 16};
  int attention_reduction = 8;

  void validate() const;
  bool operator==(const MattingConfig&) const = default;
};

/// out = in + conv(relu(conv(in))). The second convolution starts at zero.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(int channels, nn::Rng& rng);

  nn::Var operator()(nn::Tape& tape, nn::Var x) const;
  void collect(const std::string& prefix, nn::ParamList& out);

 private:
  nn::Conv2d first_;
  nn::Conv2d second_;
};

/// 3x3 head convolution with relu, then a chain of residual blocks.
class PropagationUnit {
 public:
  PropagationUnit() = default;
  PropagationUnit(int in_channels, int channels, int blocks, nn::Rng& rng);

  nn::Var operator()(nn::Tape& tape, nn::Var x) const;
  void collect(const std::string& prefix, nn::ParamList& out);
  int out_channels() const { return head_.out_channels(); }

 private:
  nn::Conv2d head_;
  std::vector<ResidualBlock> blocks_;
};

/// Gates from average- and max-pooled descriptors passed through a shared
/// two-layer bottleneck: sigmoid(mlp(avg) + mlp(max)).
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(int channels, int reduction, nn::Rng& rng);

  /// (C, 1, 1) gates in (0, 1).
  nn::Var gates(nn::Tape& tape, nn::Var x) const;
  nn::Var apply(nn::Tape& tape, nn::Var x) const;
  Tensor apply(const Tensor& x) const;
  void collect(const std::string& prefix, nn::ParamList& out);

  nn::Linear& squeeze() { return squeeze_; }
  nn::Linear& expand() { return expand_; }

 private:
  nn::Var mlp(nn::Tape& tape, nn::Var descriptor) const;

  nn::Linear squeeze_;
  nn::Linear expand_;
};

/// Alpha regressor over [image, latent features, uncertainty]. The
/// uncertainty channel is concatenated again in front of every unit after
/// the first; channel attention follows the first unit.
class MattingNet {
 public:
  MattingNet() = default;
  MattingNet(MattingConfig config, int image_channels, int feature_channels, std::uint64_t init_seed);

  bool initialized() const { return initialized_; }
  const MattingConfig& config() const { return config_; }
  int image_channels() const { return image_channels_; }
  int feature_channels() const { return feature_channels_; }

  AlphaMatte predict_alpha(const Image& image, const Tensor& features, const UncertaintyField& umap) const;

  /// Returns alpha as a (1, H, W) Var.
  nn::Var forward(nn::Tape& tape, nn::Var image, nn::Var features, nn::Var umap) const;

  nn::ParamList parameters();
  nn::Conv2d& output_conv() { return output_[1]; }

 private:
  void require_initialized() const;
  void check_inputs(const Shape& image, const Shape& features, const Shape& umap) const;

  MattingConfig config_;
  int image_channels_ = 0;
  int feature_channels_ = 0;
  bool initialized_ = false;
  std::vector<PropagationUnit> units_;
  ChannelAttention attention_;
  std::vector<nn::Conv2d> output_;
};

}  // namespace medmat::mattingnet
