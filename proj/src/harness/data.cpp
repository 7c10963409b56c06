#include "medmat/harness/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include "medmat/core/error.hpp"
#include "medmat/core/io.hpp"
#include "medmat/fusion/fusion.hpp"

namespace medmat::harness {

namespace fs = std::filesystem;

Tensor composite(const SyntheticScene& scene) {
  const int channels = static_cast<int>(scene.foreground.size());
  if (channels == 0 || scene.background.size() != scene.foreground.size()) {
    throw ShapeError("scene needs matching foreground and background colours");
  }
  Tensor out({channels, scene.alpha.height(), scene.alpha.width()});
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        const double a = scene.alpha(y, x);
        out(c, y, x) = a * scene.foreground[c] + (1.0 - a) * scene.background[c];
      }
    }
  }
  return out;
}

Image compose(const SyntheticScene& scene, Rng& rng) {
  Tensor pixels = composite(scene);
  if (scene.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, scene.noise_sigma);
    for (double& v : pixels.values()) v += noise(rng);
  }
  for (double& v : pixels.values()) v = std::clamp(v, 0.0, 1.0);
  return Image(std::move(pixels));
}

SynthOptions SynthOptions::from(const TrainConfig& config) {
  SynthOptions o;
  o.count = config.synth_count;
  o.size = config.input_size;
  o.channels = config.backbone.in_channels;
  o.noise_sigma = config.noise_sigma;
  o.annotators = config.annotators;
  o.dilation_radius = config.dilation_radius;
  o.lo_frac = config.pseudo_lo;
  o.hi_frac = config.pseudo_hi;
  return o;
}

namespace {

AlphaMatte draw_alpha(int size, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  cv::Mat alpha(size, size, CV_64FC1, cv::Scalar(0.0));
  const int blobs = unit(rng) < 0.5 ? 1 : 2;
  for (int b = 0; b < blobs; ++b) {
    const double cx = between(0.3, 0.7) * size, cy = between(0.3, 0.7) * size;
    const double ax = between(0.12, 0.28) * size, ay = between(0.12, 0.28) * size;
    const double theta = between(0.0, std::numbers::pi);
    const double ramp = between(1.5, 4.0);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double u = ct * (x - cx) + st * (y - cy);
        const double v = -st * (x - cx) + ct * (y - cy);
        const double r = std::sqrt((u / ax) * (u / ax) + (v / ay) * (v / ay));
        const double d = (r - 1.0) * std::min(ax, ay);
        const double a = std::clamp(0.5 - d / ramp, 0.0, 1.0);
        alpha.at<double>(y, x) = std::max(alpha.at<double>(y, x), a);
      }
    }
  }
  cv::GaussianBlur(alpha, alpha, cv::Size(0, 0), 1.0, 1.0, cv::BORDER_REPLICATE);
  Plane<double> plane(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) plane(y, x) = alpha.at<double>(y, x);
  }
  return AlphaMatte::clipped(std::move(plane));
}

}  // namespace

std::vector<SyntheticSample> synth_samples(const SynthOptions& options, std::uint64_t seed) {
  if (options.count < 1) throw ArityError("synthetic dataset needs count >= 1");
  if (options.size < 16) throw DomainError(fmt::format("synthetic size must be >= 16, got {}", options.size));
  if (options.channels != 1 && options.channels != 3) throw DomainError("synthetic images have 1 or 3 channels");
  Rng rng(seed);
  std::uniform_real_distribution<double> fg(0.55, 0.95), bg(0.05, 0.45);
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(options.count));
  for (int i = 0; i < options.count; ++i) {
    SyntheticScene scene;
    for (int c = 0; c < options.channels; ++c) {
      scene.foreground.push_back(fg(rng));
      scene.background.push_back(bg(rng));
    }
    scene.alpha = draw_alpha(options.size, rng);
    scene.noise_sigma = options.noise_sigma;

    Sample s;
    s.id = fmt::format("synth_{:04d}", i);
    s.image = compose(scene, rng);
    s.alpha = scene.alpha;
    s.masks = fusion::equispaced_masks(scene.alpha, options.annotators, options.lo_frac, options.hi_frac);
    s.trimap = fusion::build_trimap(std::span<const BinaryMask>(s.masks), options.dilation_radius);
    out.push_back({std::move(scene), std::move(s)});
  }
  return out;
}

std::vector<Sample> synth_dataset(const SynthOptions& options, std::uint64_t seed) {
  std::vector<Sample> out;
  for (SyntheticSample& s : synth_samples(options, seed)) out.push_back(std::move(s.sample));
  return out;
}

std::vector<Sample> synth_dataset(int count, int size, std::uint64_t seed) {
  SynthOptions o;
  o.count = count;
  o.size = size;
  return synth_dataset(o, seed);
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("manifest not found: {}", path.string()));
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::istringstream fields(line);
    std::string col;
    while (std::getline(fields, col, '\t')) cols.push_back(col);
    if (cols.size() < 3) {
      throw FormatError(fmt::format("{}:{}: expected at least 3 tab-separated columns", path.string(), line_no));
    }
    ManifestEntry e;
    e.image = cols[0];
    e.alpha = cols[1] == "-" ? "" : cols[1];
    e.trimap = cols[2] == "-" ? "" : cols[2];
    e.masks.assign(cols.begin() + 3, cols.end());
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw NotFoundError(fmt::format("cannot write manifest: {}", path.string()));
  out << "# image\talpha\ttrimap\tmasks...\n";
  for (const ManifestEntry& e : entries) {
    out << e.image << '\t' << (e.alpha.empty() ? "-" : e.alpha) << '\t' << (e.trimap.empty() ? "-" : e.trimap);
    for (const std::string& m : e.masks) out << '\t' << m;
    out << '\n';
  }
}

std::vector<Sample> load_samples(const fs::path& manifest, int dilation_radius) {
  const fs::path root = manifest.parent_path();
  std::vector<Sample> samples;
  for (const ManifestEntry& e : read_manifest(manifest)) {
    Sample s;
    s.id = fs::path(e.image).stem().string();
    s.image = io::load_image(root / e.image);
    if (!e.alpha.empty()) s.alpha = io::load_alpha(root / e.alpha);
    for (const std::string& m : e.masks) s.masks.push_back(io::load_mask(root / m));
    if (!e.trimap.empty()) {
      s.trimap = io::load_trimap(root / e.trimap);
    } else if (s.masks.size() >= 2) {
      s.trimap = fusion::build_trimap(std::span<const BinaryMask>(s.masks), dilation_radius);
    } else {
      throw FormatError(fmt::format("sample {} has no trimap and fewer than 2 masks", s.id));
    }
    if (s.alpha) require_same_extent(s.image, *s.alpha, "image vs alpha");
    require_same_extent(s.image, s.trimap, "image vs trimap");
    for (const BinaryMask& m : s.masks) require_same_extent(s.image, m, "image vs mask");
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_samples(const fs::path& dir, const std::vector<Sample>& samples) {
  std::vector<ManifestEntry> entries;
  for (const Sample& s : samples) {
    ManifestEntry e;
    e.image = fmt::format("images/{}.png", s.id);
    io::save_image(dir / e.image, s.image);
    if (s.alpha) {
      e.alpha = fmt::format("alpha/{}.png", s.id);
      io::save_alpha(dir / e.alpha, *s.alpha);
    }
    e.trimap = fmt::format("trimaps/{}.png", s.id);
    io::save_trimap(dir / e.trimap, s.trimap);
    for (std::size_t k = 0; k < s.masks.size(); ++k) {
      e.masks.push_back(fmt::format("masks/{}_{}.png", s.id, k));
      io::save_mask(dir / e.masks.back(), s.masks[k]);
    }
    entries.push_back(std::move(e));
  }
  write_manifest(dir / "manifest.tsv", entries);
}

namespace {

cv::Mat to_mat(const double* data, int h, int w) {
  return cv::Mat(h, w, CV_64FC1, const_cast<double*>(data)).clone();
}

template <typename T>
cv::Mat to_mat_u8(const Plane<T>& plane) {
  cv::Mat m(plane.height(), plane.width(), CV_8UC1);
  for (int y = 0; y < plane.height(); ++y) {
    for (int x = 0; x < plane.width(); ++x) m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(plane(y, x));
  }
  return m;
}

Plane<double> plane_from(const cv::Mat& m) {
  Plane<double> p(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) p(y, x) = std::clamp(m.at<double>(y, x), 0.0, 1.0);
  }
  return p;
}

template <typename T>
Plane<T> plane_from_u8(const cv::Mat& m) {
  Plane<T> p(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) p(y, x) = static_cast<T>(m.at<std::uint8_t>(y, x));
  }
  return p;
}

// Image and alpha go through `continuous`, trimap and masks through `discrete`.
template <typename Cont, typename Disc>
Sample map_rasters(const Sample& in, Cont continuous, Disc discrete) {
  Sample out;
  out.id = in.id;
  const Tensor& px = in.image.pixels();
  std::vector<cv::Mat> channels;
  for (int c = 0; c < px.channels(); ++c) {
    channels.push_back(continuous(to_mat(px.channel(c).data(), px.height(), px.width())));
  }
  const int h = channels.front().rows, w = channels.front().cols;
  Tensor pixels({px.channels(), h, w});
  for (int c = 0; c < px.channels(); ++c) {
    const Plane<double> p = plane_from(channels[static_cast<std::size_t>(c)]);
    std::copy(p.values().begin(), p.values().end(), pixels.channel(c).begin());
  }
  out.image = Image(std::move(pixels));
  if (in.alpha) {
    out.alpha = AlphaMatte(plane_from(continuous(to_mat(in.alpha->values().data(), in.alpha->height(),
                                                        in.alpha->width()))));
  }
  out.trimap = Trimap(plane_from_u8<TrimapLabel>(discrete(to_mat_u8(in.trimap.plane()))));
  for (const BinaryMask& m : in.masks) out.masks.emplace_back(plane_from_u8<std::uint8_t>(discrete(to_mat_u8(m.plane()))));
  return out;
}

}  // namespace

Sample resize_sample(const Sample& sample, int size, int dilation_radius) {
  if (size < Image::kMinExtent) throw DomainError(fmt::format("resize target {} is too small", size));
  const cv::Size target(size, size);
  Sample out = map_rasters(
      sample,
      [&](const cv::Mat& m) {
        cv::Mat r;
        cv::resize(m, r, target, 0, 0, cv::INTER_AREA);
        return r;
      },
      [&](const cv::Mat& m) {
        cv::Mat r;
        cv::resize(m, r, target, 0, 0, cv::INTER_NEAREST);
        return r;
      });
  if (out.masks.size() >= 2) out.trimap = fusion::build_trimap(std::span<const BinaryMask>(out.masks), dilation_radius);
  return out;
}

SpatialTransform draw_transform(const AugmentConfig& config, int height, int width, Rng& rng) {
  SpatialTransform t;
  if (!config.enabled) return t;
  std::bernoulli_distribution flip(config.flip_probability);
  t.hflip = flip(rng);
  t.vflip = flip(rng);
  if (config.max_rotation_deg > 0.0) {
    std::uniform_real_distribution<double> angle(-config.max_rotation_deg, config.max_rotation_deg);
    t.angle_deg = angle(rng);
  }
  if (config.elastic_magnitude > 0.0) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    cv::Mat fx(height, width, CV_64FC1), fy(height, width, CV_64FC1);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) fx.at<double>(y, x) = unit(rng);
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) fy.at<double>(y, x) = unit(rng);
    }
    cv::GaussianBlur(fx, fx, cv::Size(0, 0), config.elastic_sigma, config.elastic_sigma, cv::BORDER_REFLECT_101);
    cv::GaussianBlur(fy, fy, cv::Size(0, 0), config.elastic_sigma, config.elastic_sigma, cv::BORDER_REFLECT_101);
    double peak = 0.0;
    for (const cv::Mat* f : {&fx, &fy}) {
      double lo = 0.0, hi = 0.0;
      cv::minMaxLoc(*f, &lo, &hi);
      peak = std::max({peak, std::abs(lo), std::abs(hi)});
    }
    // Smoothing shrinks the field towards zero; rescale so the largest
    // displacement equals the configured magnitude.
    const double gain = peak > 0.0 ? config.elastic_magnitude / peak : 0.0;
    t.dx = Plane<double>(height, width);
    t.dy = Plane<double>(height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        t.dx(y, x) = gain * fx.at<double>(y, x);
        t.dy(y, x) = gain * fy.at<double>(y, x);
      }
    }
  }
  return t;
}

Sample apply_transform(const Sample& sample, const SpatialTransform& t) {
  if (t.identity()) return sample;
  const int h = sample.image.height(), w = sample.image.width();
  cv::Mat map_x, map_y;
  if (t.warps()) {
    const bool elastic = t.dx.size() != 0;
    if (elastic && (!t.dx.same_extent(h, w) || !t.dy.same_extent(h, w))) {
      throw ShapeError("elastic field does not match the sample extent");
    }
    map_x.create(h, w, CV_32FC1);
    map_y.create(h, w, CV_32FC1);
    const double rad = t.angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double px = x + (elastic ? t.dx(y, x) : 0.0) - cx;
        const double py = y + (elastic ? t.dy(y, x) : 0.0) - cy;
        map_x.at<float>(y, x) = static_cast<float>(c * px + s * py + cx);
        map_y.at<float>(y, x) = static_cast<float>(-s * px + c * py + cy);
      }
    }
  }
  const int flip_code = t.hflip && t.vflip ? -1 : (t.hflip ? 1 : 0);
  auto finish = [&](const cv::Mat& in, int interpolation) {
    cv::Mat out = in;
    if (t.warps()) cv::remap(in, out, map_x, map_y, interpolation, cv::BORDER_REFLECT_101);
    if (t.hflip || t.vflip) cv::flip(out.clone(), out, flip_code);
    return out;
  };
  return map_rasters(
      sample, [&](const cv::Mat& m) { return finish(m, cv::INTER_LINEAR); },
      [&](const cv::Mat& m) { return finish(m, cv::INTER_NEAREST); });
}

Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng) {
  return apply_transform(sample, draw_transform(config, sample.image.height(), sample.image.width(), rng));
}

}  // namespace medmat::harness
