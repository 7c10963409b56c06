#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "medmat/core/image.hpp"
#include "medmat/harness/config.hpp"

namespace medmat::harness {

using Rng = std::mt19937_64;

struct Sample {
  std::string id;
  Image image;
  std::optional<AlphaMatte> alpha;
  Trimap trimap;
  std::vector<BinaryMask> masks;
};

/// Ground truth behind one synthetic image: I = alpha F + (1 - alpha) B
/// plus Gaussian noise, clipped to [0, 1].
struct SyntheticScene {
  std::vector<double> foreground;  // per channel
  std::vector<double> background;  // per channel
  AlphaMatte alpha;
  double noise_sigma = 0.0;
};

/// Noise-free composite.
Tensor composite(const SyntheticScene& scene);
Image compose(const SyntheticScene& scene, Rng& rng);

struct SynthOptions {
  int count = 64;
  int size = 32;
  int channels = 1;
  double noise_sigma = 0.02;
  int annotators = 4;
  int dilation_radius = fusion::kDefaultDilationRadius;
  double lo_frac = 0.2;
  double hi_frac = 0.7;

  static SynthOptions from(const TrainConfig& config);
};

struct SyntheticSample {
  SyntheticScene scene;
  Sample sample;
};

/// Soft elliptical blobs with blurred edges; annotator masks are
/// equispaced thresholds of alpha. Deterministic per seed.
std::vector<SyntheticSample> synth_samples(const SynthOptions& options, std::uint64_t seed);
std::vector<Sample> synth_dataset(int count, int size, std::uint64_t seed);
std::vector<Sample> synth_dataset(const SynthOptions& options, std::uint64_t seed);

/// Tab-separated: image, alpha or "-", trimap or "-", then annotator masks.
/// Paths are relative to the manifest. Lines starting with '#' are skipped.
struct ManifestEntry {
  std::string image;
  std::string alpha;
  std::string trimap;
  std::vector<std::string> masks;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Loads every sample; a missing trimap is rebuilt from the masks.
std::vector<Sample> load_samples(const std::filesystem::path& manifest, int dilation_radius);
/// Writes PNGs under `dir` plus dir/manifest.tsv.
void write_samples(const std::filesystem::path& dir, const std::vector<Sample>& samples);

/// Area-resamples image and alpha, nearest for masks, and rebuilds the
/// trimap from the resized masks.
Sample resize_sample(const Sample& sample, int size, int dilation_radius);

/// Joint spatial transform: an optional warp (rotation about the centre
/// composed with an elastic displacement) followed by exact flips.
struct SpatialTransform {
  bool hflip = false;
  bool vflip = false;
  double angle_deg = 0.0;
  Plane<double> dx;  // empty when there is no elastic component
  Plane<double> dy;

  bool warps() const { return angle_deg != 0.0 || dx.size() != 0; }
  bool identity() const { return !hflip && !vflip && !warps(); }
};

SpatialTransform draw_transform(const AugmentConfig& config, int height, int width, Rng& rng);
/// Bilinear for image and alpha, nearest for masks and trimap.
Sample apply_transform(const Sample& sample, const SpatialTransform& transform);
Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng);

}  // namespace medmat::harness
