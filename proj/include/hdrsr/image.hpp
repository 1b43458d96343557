#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "hdrsr/error.hpp"

namespace hdrsr {

/// Single-channel row-major map (luminance, illumination, reflectance).
class Plane {
 public:
  Plane() = default;
  Plane(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width), data_(height * width, fill) {}
  Plane(std::size_t height, std::size_t width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != height_ * width_) {
      throw ShapeError("plane data length " + std::to_string(data_.size()) + " != " +
                       std::to_string(height_) + "x" + std::to_string(width_));
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }
  double at(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool same_shape(const Plane& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

/// H x W x C interleaved raster. LDR content lives in [0,1]; HDR content is
/// non-negative and unbounded.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {
    check_channels();
  }
  RasterImage(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_channels();
    if (data_.size() != height_ * width_ * channels_) {
      throw ShapeError("image data length mismatch");
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * width_ + x) * channels_ + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Plane channel(std::size_t c) const {
    if (c >= channels_) throw ShapeError("channel index out of range");
    Plane p(height_, width_);
    for (std::size_t i = 0; i < height_ * width_; ++i) p[i] = data_[i * channels_ + c];
    return p;
  }

  static RasterImage from_planes(std::span<const Plane* const> planes) {
    if (planes.empty()) throw ShapeError("no planes");
    const auto& first = *planes[0];
    RasterImage img(first.height(), first.width(), planes.size());
    for (std::size_t c = 0; c < planes.size(); ++c) {
      if (!planes[c]->same_shape(first)) throw ShapeError("plane shapes differ");
      for (std::size_t i = 0; i < first.size(); ++i) img.data_[i * planes.size() + c] = (*planes[c])[i];
    }
    return img;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }
  bool is_ldr() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  void check_channels() const {
    if (channels_ != 1 && channels_ != 3) {
      throw ShapeError("images have 1 or 3 channels, got " + std::to_string(channels_));
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

// Full-range BT.601 coefficients.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;
inline constexpr double kCbScale = 0.564;
inline constexpr double kCrScale = 0.713;

inline double luminance(double r, double g, double b) noexcept {
  return kLumaR * r + kLumaG * g + kLumaB * b;
}

struct YCbCrPlanes {
  Plane y;
  Plane cb;
  Plane cr;
};

inline YCbCrPlanes rgb_to_ycbcr(const RasterImage& image) {
  if (image.channels() != 3) throw ShapeError("rgb_to_ycbcr needs a 3-channel image");
  const std::size_t h = image.height(), w = image.width();
  YCbCrPlanes out{Plane(h, w), Plane(h, w), Plane(h, w)};
  const auto src = image.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    const double r = src[3 * i], g = src[3 * i + 1], b = src[3 * i + 2];
    const double y = luminance(r, g, b);
    out.y[i] = y;
    out.cb[i] = 0.5 + (b - y) * kCbScale;
    out.cr[i] = 0.5 + (r - y) * kCrScale;
  }
  return out;
}

/// Inverse of rgb_to_ycbcr. The result is not clamped.
inline RasterImage ycbcr_to_rgb(const Plane& y, const Plane& cb, const Plane& cr) {
  if (!y.same_shape(cb) || !y.same_shape(cr)) throw ShapeError("ycbcr_to_rgb plane shapes differ");
  RasterImage out(y.height(), y.width(), 3);
  auto dst = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] + (cr[i] - 0.5) / kCrScale;
    const double b = y[i] + (cb[i] - 0.5) / kCbScale;
    const double g = (y[i] - kLumaR * r - kLumaB * b) / kLumaG;
    dst[3 * i] = r;
    dst[3 * i + 1] = g;
    dst[3 * i + 2] = b;
  }
  return out;
}

inline Plane gamma_map(const Plane& plane, double exponent) {
  if (!(exponent > 0.0)) throw ParameterError("gamma exponent must be positive");
  Plane out(plane.height(), plane.width());
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const double v = plane[i];
    if (!(v >= 0.0)) throw RangeError("gamma_map: negative or NaN sample");
    out[i] = std::pow(v, exponent);
  }
  return out;
}

/// Keys cubic convolution kernel.
inline double keys_kernel(double x, double a = -0.5) noexcept {
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace detail {

struct CubicTaps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
  int anchor;  // tap nearest to the sample position
};

// Half-pixel-centered source coordinates for each output sample, clamped taps.
inline std::vector<CubicTaps> cubic_taps(std::size_t in_size, std::size_t out_size) {
  std::vector<CubicTaps> taps(out_size);
  const double ratio = static_cast<double>(in_size) / static_cast<double>(out_size);
  const auto last = static_cast<long>(in_size) - 1;
  for (std::size_t o = 0; o < out_size; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    auto& tp = taps[o];
    for (int k = 0; k < 4; ++k) {
      const long idx = static_cast<long>(base) - 1 + k;
      tp.index[k] = static_cast<std::size_t>(std::clamp(idx, 0L, last));
      tp.weight[k] = keys_kernel(t - (k - 1));
    }
    tp.anchor = t < 0.5 ? 1 : 2;
  }
  return taps;
}

// Weighted sum anchored at the nearest tap, so flat regions reproduce exactly.
template <typename Fetch>
inline double apply_taps(const CubicTaps& tp, Fetch&& fetch) {
  const double ref = fetch(tp.index[tp.anchor]);
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) acc += tp.weight[k] * (fetch(tp.index[k]) - ref);
  return ref + acc;
}

}  // namespace detail

/// Keys (a = -0.5) bicubic resampling with edge clamping. Output dimensions are
/// round(scale * input dimensions).
inline Plane bicubic_resize(const Plane& plane, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ParameterError("resize scale must be positive");
  if (plane.empty()) throw ShapeError("resize of an empty plane");
  const auto out_h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scale * plane.height())));
  const auto out_w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scale * plane.width())));
  const auto taps_x = detail::cubic_taps(plane.width(), out_w);
  const auto taps_y = detail::cubic_taps(plane.height(), out_h);

  Plane horizontal(plane.height(), out_w);
  for (std::size_t y = 0; y < plane.height(); ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      horizontal.at(y, x) = detail::apply_taps(taps_x[x], [&](std::size_t i) { return plane.at(y, i); });
    }
  }
  Plane out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      out.at(y, x) = detail::apply_taps(taps_y[y], [&](std::size_t i) { return horizontal.at(i, x); });
    }
  }
  return out;
}

/// Per-channel bicubic resize of a full raster.
inline RasterImage bicubic_resize(const RasterImage& image, double scale) {
  std::vector<Plane> planes;
  std::vector<const Plane*> ptrs;
  planes.reserve(image.channels());
  for (std::size_t c = 0; c < image.channels(); ++c) planes.push_back(bicubic_resize(image.channel(c), scale));
  for (const auto& p : planes) ptrs.push_back(&p);
  return RasterImage::from_planes(ptrs);
}

inline Plane clamp_plane(const Plane& plane, double lo, double hi) {
  Plane out = plane;
  for (auto& v : out.storage()) v = std::clamp(v, lo, hi);
  return out;
}

/// Replicates a single-channel image into RGB; 3-channel input is returned as is.
inline RasterImage to_rgb(const RasterImage& image) {
  if (image.channels() == 3) return image;
  RasterImage out(image.height(), image.width(), 3);
  for (std::size_t i = 0; i < image.height() * image.width(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) out.data()[3 * i + c] = image.data()[i];
  }
  return out;
}

}  // namespace hdrsr
