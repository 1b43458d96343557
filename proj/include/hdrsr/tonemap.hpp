#pragma once

#include <algorithm>
#include <cmath>

#include "hdrsr/error.hpp"
#include "hdrsr/image.hpp"

namespace hdrsr {

inline constexpr double kDisplayGamma = 2.2;

/// Global Reinhard operator with L_white = max scaled luminance, followed by
/// x^(1/2.2) display encoding and a clamp to [0, 1].
inline RasterImage reinhard_tonemap(const RasterImage& hdr, double key = 0.18) {
  if (!(key > 0.0)) throw RangeError("reinhard_tonemap: key must be positive");
  const RasterImage rgb = to_rgb(hdr);
  for (double v : rgb.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw RangeError("reinhard_tonemap: input must be finite and non-negative");
  }
  const std::size_t pixels = rgb.height() * rgb.width();
  RasterImage out(rgb.height(), rgb.width(), 3);
  if (pixels == 0) return out;

  std::vector<double> lum(pixels);
  double log_sum = 0.0;
  for (std::size_t i = 0; i < pixels; ++i) {
    const auto px = rgb.data().subspan(i * 3, 3);
    lum[i] = luminance(px[0], px[1], px[2]);
    log_sum += std::log(lum[i] + 1e-6);
  }
  const double log_mean = std::exp(log_sum / static_cast<double>(pixels));
  double white = 0.0;
  for (auto& l : lum) white = std::max(white, key * l / log_mean);
  if (white == 0.0) return out;

  const double white2 = white * white;
  auto dst = out.data();
  for (std::size_t i = 0; i < pixels; ++i) {
    if (lum[i] <= 0.0) continue;
    const double lm = key * lum[i] / log_mean;
    const double ld = lm * (1.0 + lm / white2) / (1.0 + lm);
    const double s = ld / lum[i];
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::pow(std::max(rgb.data()[i * 3 + c] * s, 0.0), 1.0 / kDisplayGamma);
      dst[i * 3 + c] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

/// Scales an HDR map so its brightest pixel has luminance `display_peak`.
inline RasterImage linear_stretch(const RasterImage& hdr, double display_peak) {
  if (!(display_peak > 0.0) || !std::isfinite(display_peak)) {
    throw RangeError("linear_stretch: display peak must be positive");
  }
  double peak = 0.0;
  const std::size_t ch = hdr.channels();
  for (std::size_t i = 0; i < hdr.height() * hdr.width(); ++i) {
    const auto px = hdr.data().subspan(i * ch, ch);
    peak = std::max(peak, ch == 3 ? luminance(px[0], px[1], px[2]) : px[0]);
  }
  RasterImage out = hdr;
  if (peak <= 0.0) return out;
  const double s = display_peak / peak;
  for (auto& v : out.data()) v *= s;
  return out;
}

}  // namespace hdrsr
