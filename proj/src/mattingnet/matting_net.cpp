#include "medmat/mattingnet/matting_net.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "medmat/core/error.hpp"
#include "medmat/nn/ops.hpp"

namespace medmat::mattingnet {

using nn::Tape;
using nn::Var;

void MattingConfig::validate() const {
  if (unit_count < 1) throw ConfigError(fmt::format("unit_count must be >= 1, got {}", unit_count));
  if (blocks_per_unit < 1) throw ConfigError(fmt::format("blocks_per_unit must be >= 1, got {}", blocks_per_unit));
  if (static_cast<int>(unit_channels.size()) != unit_count) {
    throw ConfigError(fmt::format("unit_channels lists {} widths for {} units", unit_channels.size(), unit_count));
  }
  for (int c : unit_channels) {
    if (c < 1) throw ConfigError("unit widths must be positive");
  }
  if (attention_reduction < 1) throw ConfigError("attention_reduction must be >= 1");
}

ResidualBlock::ResidualBlock(int channels, nn::Rng& rng)
    : first_(channels, channels, 3, rng), second_(channels, channels, 3, rng) {
  second_.zero();
}

Var ResidualBlock::operator()(Tape& tape, Var x) const {
  return nn::add(x, second_(tape, nn::relu(first_(tape, x))));
}

void ResidualBlock::collect(const std::string& prefix, nn::ParamList& out) {
  first_.collect(prefix + ".conv0", out);
  second_.collect(prefix + ".conv1", out);
}

PropagationUnit::PropagationUnit(int in_channels, int channels, int blocks, nn::Rng& rng)
    : head_(in_channels, channels, 3, rng) {
  for (int b = 0; b < blocks; ++b) blocks_.emplace_back(channels, rng);
}

Var PropagationUnit::operator()(Tape& tape, Var x) const {
  x = nn::relu(head_(tape, x));
  for (const ResidualBlock& block : blocks_) x = block(tape, x);
  return x;
}

void PropagationUnit::collect(const std::string& prefix, nn::ParamList& out) {
  head_.collect(prefix + ".head", out);
  for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].collect(fmt::format("{}.block{}", prefix, b), out);
}

ChannelAttention::ChannelAttention(int channels, int reduction, nn::Rng& rng) {
  const int hidden = std::max(1, channels / reduction);
  squeeze_ = nn::Linear(channels, hidden, rng);
  expand_ = nn::Linear(hidden, channels, rng);
}

Var ChannelAttention::mlp(Tape& tape, Var descriptor) const {
  return expand_(tape, nn::relu(squeeze_(tape, descriptor)));
}

Var ChannelAttention::gates(Tape& tape, Var x) const {
  return nn::sigmoid(nn::add(mlp(tape, nn::global_avg_pool(x)), mlp(tape, nn::global_max_pool(x))));
}

Var ChannelAttention::apply(Tape& tape, Var x) const { return nn::scale_channels(x, gates(tape, x)); }

Tensor ChannelAttention::apply(const Tensor& x) const {
  if (x.channels() < 1 || x.shape().plane() == 0) throw ShapeError("channel attention needs a nonempty feature stack");
  Tape tape(false);
  return apply(tape, tape.constant(x)).value();
}

void ChannelAttention::collect(const std::string& prefix, nn::ParamList& out) {
  squeeze_.collect(prefix + ".squeeze", out);
  expand_.collect(prefix + ".expand", out);
}

MattingNet::MattingNet(MattingConfig config, int image_channels, int feature_channels, std::uint64_t init_seed)
    : config_(std::move(config)), image_channels_(image_channels), feature_channels_(feature_channels) {
  config_.validate();
  if (image_channels != 1 && image_channels != 3) throw ConfigError("matting input image must have 1 or 3 channels");
  if (feature_channels < 0) throw ConfigError("feature channel count must be nonnegative");
  nn::Rng rng(init_seed);
  int in = image_channels + feature_channels + 1;
  for (int u = 0; u < config_.unit_count; ++u) {
    const int width = config_.unit_channels[static_cast<std::size_t>(u)];
    units_.emplace_back(in, width, config_.blocks_per_unit, rng);
    if (u == 0) attention_ = ChannelAttention(width, config_.attention_reduction, rng);
    in = width + 1;
  }
  const int last = config_.unit_channels.back();
  output_.emplace_back(last, last, 3, rng);
  output_.emplace_back(last, 1, 3, rng);
  // Starting from a flat matte keeps the initial output at sigmoid(bias).
  output_[1].zero();
  initialized_ = true;
}

void MattingNet::require_initialized() const {
  if (!initialized_) throw StateError("matting network used before initialisation");
}

void MattingNet::check_inputs(const Shape& image, const Shape& features, const Shape& umap) const {
  if (image.channels != image_channels_) {
    throw ShapeError(fmt::format("matting network expects {} image channels, got {}", image_channels_, image.channels));
  }
  if (features.channels != feature_channels_) {
    throw ShapeError(fmt::format("matting network expects {} feature channels, got {}", feature_channels_,
                                 features.channels));
  }
  if (umap.channels != 1) throw ShapeError("uncertainty map must have a single channel");
  if (features.height != image.height || features.width != image.width || umap.height != image.height ||
      umap.width != image.width) {
    throw ShapeError(fmt::format("matting inputs disagree in extent: image {}, features {}, umap {}", image.str(),
                                 features.str(), umap.str()));
  }
}

Var MattingNet::forward(Tape& tape, Var image, Var features, Var umap) const {
  require_initialized();
  check_inputs(image.shape(), features.shape(), umap.shape());
  // The segmentation objective alone sets the feature scale; standardising
  // keeps it from saturating the output sigmoid.
  Var x = nn::concat({image, nn::instance_norm(features), umap});
  for (std::size_t u = 0; u < units_.size(); ++u) {
    if (u > 0) x = nn::concat({x, umap});
    x = units_[u](tape, x);
    if (u == 0) x = attention_.apply(tape, x);
  }
  x = nn::relu(output_[0](tape, x));
  return nn::sigmoid(output_[1](tape, x));
}

AlphaMatte MattingNet::predict_alpha(const Image& image, const Tensor& features, const UncertaintyField& umap) const {
  require_initialized();
  Tape tape(false);
  const Var alpha =
      forward(tape, tape.constant(image.pixels()), tape.constant(features), tape.constant(umap.to_tensor()));
  return AlphaMatte::from_tensor(alpha.value());
}

nn::ParamList MattingNet::parameters() {
  require_initialized();
  nn::ParamList out;
  for (std::size_t u = 0; u < units_.size(); ++u) units_[u].collect(fmt::format("matting.unit{}", u), out);
  attention_.collect("matting.attention", out);
  output_[0].collect("matting.output.conv0", out);
  output_[1].collect("matting.output.conv1", out);
  return out;
}

}  // namespace medmat::mattingnet
