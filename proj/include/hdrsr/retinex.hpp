#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "hdrsr/error.hpp"
#include "hdrsr/image.hpp"
#include "hdrsr/wls.hpp"

namespace hdrsr {

/// Floor applied to luminance and illumination before any logarithm.
inline constexpr double kIlluminationFloor = 1e-4;
/// Margin kept from +-1 before inverting tanh.
inline constexpr double kTanhClampMargin = 1e-6;

struct DecompositionResult {
  Plane illumination;
  Plane reflectance;
};

/// I = max(WLS(Y), 1e-4), smoothing guided by ln(Y + 1e-4).
inline Plane estimate_illumination(const Plane& y_linear, const WlsParams& params) {
  Plane guidance = y_linear;
  for (auto& v : guidance.storage()) v += kIlluminationFloor;
  Plane out = solve_wls(y_linear, guidance, params);
  for (auto& v : out.storage()) v = std::max(v, kIlluminationFloor);
  return out;
}

/// R = ln(max(Y, 1e-4)) - ln(I).
inline Plane compute_reflectance(const Plane& y_linear, const Plane& illumination) {
  if (!y_linear.same_shape(illumination)) throw ShapeError("compute_reflectance: shape mismatch");
  Plane out(y_linear.height(), y_linear.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(illumination[i] > 0.0)) throw RangeError("compute_reflectance: illumination must be positive");
    out[i] = std::log(std::max(y_linear[i], kIlluminationFloor)) - std::log(illumination[i]);
  }
  return out;
}

inline DecompositionResult decompose(const Plane& y_linear, const WlsParams& params) {
  DecompositionResult result;
  result.illumination = estimate_illumination(y_linear, params);
  result.reflectance = compute_reflectance(y_linear, result.illumination);
  return result;
}

/// tanh(r), kept strictly inside (-1, 1) even where tanh saturates in double.
inline Plane bound_reflectance(const Plane& r) {
  constexpr double kTop = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  Plane out(r.height(), r.width());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = std::clamp(std::tanh(r[i]), -kTop, kTop);
  return out;
}

inline double unbound_value(double t) {
  return std::atanh(std::clamp(t, -1.0 + kTanhClampMargin, 1.0 - kTanhClampMargin));
}

inline Plane unbound_reflectance(const Plane& t) {
  Plane out(t.height(), t.width());
  for (std::size_t i = 0; i < t.size(); ++i) {
    // NaN would survive the clamp; map it to zero reflectance.
    out[i] = std::isnan(t[i]) ? 0.0 : unbound_value(t[i]);
  }
  return out;
}

/// Bicubic upscale, clamp to [1e-4, 1], then x^(1/2.2).
inline Plane enhance_illumination(const Plane& i_ll, double scale, double gamma = 1.0 / 2.2) {
  return gamma_map(clamp_plane(bicubic_resize(i_ll, scale), kIlluminationFloor, 1.0), gamma);
}

/// Y = I * exp(R).
inline Plane recombine(const Plane& i_hat, const Plane& r_hat) {
  if (!i_hat.same_shape(r_hat)) throw ShapeError("recombine: shape mismatch");
  Plane out(i_hat.height(), i_hat.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(i_hat[i] > 0.0)) throw RangeError("recombine: illumination must be positive");
    out[i] = i_hat[i] * std::exp(r_hat[i]);
  }
  return out;
}

}  // namespace hdrsr
