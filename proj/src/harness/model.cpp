#include "medmat/harness/model.hpp"

#include <fmt/format.h>

#include "medmat/core/error.hpp"
#include "medmat/nn/archive.hpp"

namespace medmat::harness {

namespace {

constexpr std::uint64_t kMaskgenSeedSalt = 0x6d61736b67656eULL;
constexpr std::uint64_t kMattingSeedSalt = 0x6d617474696e67ULL;

}  // namespace

nn::ParamList Model::parameters() {
  nn::ParamList out = maskgen.parameters();
  for (nn::ParamRef& p : matting.parameters()) out.push_back(p);
  out.push_back({"uws.log_sigma", &uws.log_sigma, false});
  return out;
}

Model build_model(const TrainConfig& config) {
  config.validate();
  Model m;
  m.maskgen = maskgen::ProbUnet(config.backbone, config.seed ^ kMaskgenSeedSalt);
  m.matting = mattingnet::MattingNet(config.matting, config.backbone.in_channels, m.maskgen.feature_channels(),
                                     config.seed ^ kMattingSeedSalt);
  return m;
}

void save_checkpoint(const std::filesystem::path& path, Model& model, const TrainConfig& config) {
  nn::Archive archive;
  archive.format = kCheckpointFormat;
  archive.version = kCheckpointVersion;
  archive.metadata["config"] = format_config(config);
  for (const nn::ParamRef& p : model.parameters()) archive.tensors.emplace(p.name, *p.tensor);
  nn::save_archive(path, archive);
}

Model load_checkpoint(const std::filesystem::path& path, TrainConfig* config_out) {
  const nn::Archive archive = nn::load_archive(path, kCheckpointFormat, kCheckpointVersion);
  if (!archive.metadata.contains("config") || !archive.metadata["config"].is_string()) {
    throw FormatError(fmt::format("checkpoint {} carries no config", path.string()));
  }
  const TrainConfig config = parse_config(archive.metadata["config"].get<std::string>());
  Model model = build_model(config);
  nn::ParamList params = model.parameters();
  for (const nn::ParamRef& p : params) {
    auto it = archive.tensors.find(p.name);
    if (it == archive.tensors.end()) throw FormatError(fmt::format("checkpoint lacks tensor {}", p.name));
    if (it->second.shape() != p.tensor->shape()) {
      throw FormatError(fmt::format("checkpoint tensor {} has shape {}, expected {}", p.name, it->second.shape().str(),
                                    p.tensor->shape().str()));
    }
    *p.tensor = it->second;
  }
  if (archive.tensors.size() != params.size()) throw FormatError("checkpoint holds tensors the model does not use");
  if (config_out != nullptr) *config_out = config;
  return model;
}

Prediction infer(const Model& model, const Image& image, int n_samples, std::uint64_t seed, bool use_uncertainty) {
  const Tensor features = model.maskgen.latent_features(image);
  const maskgen::GaussianLatent prior = model.maskgen.prior_encode(image);
  Prediction p;
  p.scores = model.maskgen.sample_masks(features, prior, n_samples, seed);
  p.umap = maskgen::uncertainty_map(p.scores);
  const UncertaintyField input =
      use_uncertainty ? p.umap.values : UncertaintyField(Plane<double>(image.height(), image.width()));
  p.alpha = model.matting.predict_alpha(image, features, input);
  return p;
}

}  // namespace medmat::harness
