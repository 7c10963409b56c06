#include "medmat/core/io.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "medmat/core/error.hpp"

namespace medmat::io {

namespace fs = std::filesystem;

namespace {

cv::Mat read_raster(const fs::path& path) {
  if (!fs::exists(path)) throw NotFoundError(fmt::format("no such file: {}", path.string()));
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw FormatError(fmt::format("cannot decode raster: {}", path.string()));
  if (m.depth() != CV_8U) {
    throw FormatError(fmt::format("{}: only 8-bit rasters are supported", path.string()));
  }
  return m;
}

cv::Mat read_single_channel(const fs::path& path) {
  cv::Mat m = read_raster(path);
  if (m.channels() != 1) {
    throw FormatError(fmt::format("{}: expected a single-channel raster", path.string()));
  }
  return m;
}

void write_raster(const fs::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) {
    throw FormatError(fmt::format("cannot write raster: {}", path.string()));
  }
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image load_image(const fs::path& path) {
  cv::Mat m = read_raster(path);
  if (m.channels() == 4) {
    throw FormatError(fmt::format("{}: alpha-channel rasters are not supported", path.string()));
  }
  if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  const int c = m.channels();
  Tensor t({c, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      for (int k = 0; k < c; ++k) t(k, y, x) = row[x * c + k] / 255.0;
    }
  }
  return Image(std::move(t));
}

void save_image(const fs::path& path, const Image& image) {
  const int c = image.channels();
  cv::Mat m(image.height(), image.width(), CV_MAKETYPE(CV_8U, c));
  for (int y = 0; y < m.rows; ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      for (int k = 0; k < c; ++k) row[x * c + k] = quantize(image(k, y, x));
    }
  }
  if (c == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  write_raster(path, m);
}

AlphaMatte load_alpha(const fs::path& path) {
  cv::Mat m = read_single_channel(path);
  Plane<double> a(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) a(y, x) = m.at<std::uint8_t>(y, x) / 255.0;
  }
  return AlphaMatte(std::move(a));
}

void save_alpha(const fs::path& path, const AlphaMatte& alpha) {
  cv::Mat m(alpha.height(), alpha.width(), CV_8UC1);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) m.at<std::uint8_t>(y, x) = quantize(alpha(y, x));
  }
  write_raster(path, m);
}

BinaryMask load_mask(const fs::path& path) {
  cv::Mat m = read_single_channel(path);
  BinaryMask mask(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) mask.set(y, x, m.at<std::uint8_t>(y, x) >= 128);
  }
  return mask;
}

void save_mask(const fs::path& path, const BinaryMask& mask) {
  cv::Mat m(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) m.at<std::uint8_t>(y, x) = mask(y, x) ? 255 : 0;
  }
  write_raster(path, m);
}

Trimap load_trimap(const fs::path& path) {
  cv::Mat m = read_single_channel(path);
  Plane<TrimapLabel> labels(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      const std::uint8_t v = m.at<std::uint8_t>(y, x);
      if (v != 0 && v != 128 && v != 255) {
        throw FormatError(fmt::format("{}: invalid trimap value {}", path.string(), int(v)));
      }
      labels(y, x) = static_cast<TrimapLabel>(v);
    }
  }
  return Trimap(std::move(labels));
}

void save_trimap(const fs::path& path, const Trimap& trimap) {
  cv::Mat m(trimap.height(), trimap.width(), CV_8UC1);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(trimap(y, x));
  }
  write_raster(path, m);
}

void save_scaled(const fs::path& path, const UncertaintyField& field, double max_value) {
  if (!(max_value > 0.0)) throw DomainError("save_scaled requires a positive maximum");
  cv::Mat m(field.height(), field.width(), CV_8UC1);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) m.at<std::uint8_t>(y, x) = quantize(field(y, x) / max_value);
  }
  write_raster(path, m);
}

}  // namespace medmat::io
