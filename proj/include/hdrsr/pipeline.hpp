#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "hdrsr/error.hpp"
#include "hdrsr/image.hpp"
#include "hdrsr/refnet.hpp"
#include "hdrsr/retinex.hpp"
#include "hdrsr/tonemap.hpp"
#include "hdrsr/wls.hpp"

namespace hdrsr {

struct PipelineConfig {
  std::size_t scale = 2;
  WlsParams wls;
  double gamma_linearize = 2.2;
  double gamma_illum = 1.0 / 2.2;
  double gamma_final = 2.2;
  double tonemap_key = 0.18;
  std::string weights_path;

  void validate() const {
    if (scale != 2) throw ConfigError("only scale = 2 is supported");
    try {
      wls.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    for (double g : {gamma_linearize, gamma_illum, gamma_final, tonemap_key}) {
      if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("gamma and key values must be positive");
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_real(std::string_view key, std::string_view v, std::size_t line) {
  // strtod accepts forms from_chars lacks on older libstdc++ (leading '+')
  const std::string text(v);
  char* end = nullptr;
  const double out = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(out)) {
    throw ConfigError("config line " + std::to_string(line) + ": '" + std::string(key) + "' needs a number, got '" +
                      text + "'");
  }
  return out;
}

}  // namespace detail

/// `key=value` lines over the defaults. Blank lines and lines starting with
/// '#' are ignored; unknown keys and malformed values are errors.
inline PipelineConfig parse_config(std::string_view text, PipelineConfig cfg = {}) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    auto real = [&]() { return detail::parse_real(key, value, line_no); };
    if (key == "scale") {
      const double s = real();
      if (s != 2.0) throw ConfigError("config line " + std::to_string(line_no) + ": only scale=2 is supported");
      cfg.scale = 2;
    } else if (key == "wls_lambda" || key == "lambda") {
      cfg.wls.lambda = real();
    } else if (key == "wls_alpha" || key == "alpha") {
      cfg.wls.alpha = real();
    } else if (key == "wls_epsilon" || key == "epsilon") {
      cfg.wls.epsilon = real();
    } else if (key == "gamma_linearize") {
      cfg.gamma_linearize = real();
    } else if (key == "gamma_illum") {
      cfg.gamma_illum = real();
    } else if (key == "gamma_final") {
      cfg.gamma_final = real();
    } else if (key == "tonemap_key") {
      cfg.tonemap_key = real();
    } else if (key == "weights_path") {
      cfg.weights_path = std::string(value);
    } else {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig cfg = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(cfg));
}

/// Mirror padding without repeating the edge sample (…c b | a b c | b a…).
inline Plane reflect_pad(const Plane& p, std::size_t height, std::size_t width) {
  if (p.empty()) throw ShapeError("reflect_pad of an empty plane");
  auto fold = [](long i, long n) {
    if (n == 1) return 0L;
    const long period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };
  Plane out(height, width);
  const long h = static_cast<long>(p.height()), w = static_cast<long>(p.width());
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      out.at(y, x) = p.at(static_cast<std::size_t>(fold(static_cast<long>(y), h)),
                           static_cast<std::size_t>(fold(static_cast<long>(x), w)));
  return out;
}

/// Runs the generator on a bounded reflectance plane of any size: reflect-pads
/// to a multiple of 2^depth, keeps the values strictly inside (-1, 1) after
/// rounding to float, and crops the 2x output back.
inline Plane apply_refnet(const RefNet& net, const Plane& bounded) {
  const std::size_t m = std::size_t{1} << net.config.unet_depth;
  const std::size_t ph = (bounded.height() + m - 1) / m * m, pw = (bounded.width() + m - 1) / m * m;
  const Plane padded = reflect_pad(bounded, ph, pw);
  constexpr float kTop = 1.0f - static_cast<float>(kTanhClampMargin);
  Tensor<float> x(Shape{1, ph, pw, 1});
  for (std::size_t i = 0; i < padded.size(); ++i) x[i] = std::clamp(static_cast<float>(padded[i]), -kTop, kTop);
  const Tensor<float> y = refnet_forward(net, x);
  const std::size_t s = net.config.scale;
  Plane out(bounded.height() * s, bounded.width() * s);
  for (std::size_t r = 0; r < out.height(); ++r)
    for (std::size_t c = 0; c < out.width(); ++c) out.at(r, c) = static_cast<double>(y.at(0, r, c, 0));
  return out;
}

struct InferenceResult {
  RasterImage hdr;
  RasterImage ldr;
  // intermediate planes at output resolution
  Plane y_hh;
  Plane i_hh;
  Plane r_hh;
  Plane cb_hh;
  Plane cr_hh;
};

/// LDR in [0, 1] (gray or RGB) to a 2x HDR irradiance map and its tonemapped
/// display version.
inline InferenceResult infer(const RasterImage& input, const RefNet& net, const PipelineConfig& config) {
  config.validate();
  if (!input.is_ldr()) throw RangeError("infer: input samples must lie in [0, 1]");
  if (input.height() == 0 || input.width() == 0) throw ShapeError("infer: empty image");
  const auto ycc = rgb_to_ycbcr(to_rgb(input));
  const Plane y_lin = gamma_map(ycc.y, config.gamma_linearize);
  const auto dec = decompose(y_lin, config.wls);
  const double s = static_cast<double>(config.scale);

  InferenceResult out;
  out.i_hh = enhance_illumination(dec.illumination, s, config.gamma_illum);
  out.r_hh = unbound_reflectance(apply_refnet(net, bound_reflectance(dec.reflectance)));
  out.y_hh = recombine(out.i_hh, out.r_hh);
  out.cb_hh = bicubic_resize(ycc.cb, s);
  out.cr_hh = bicubic_resize(ycc.cr, s);
  RasterImage rgb = ycbcr_to_rgb(out.y_hh, out.cb_hh, out.cr_hh);
  for (auto& v : rgb.data()) v = std::pow(std::max(v, 0.0), config.gamma_final);
  out.hdr = std::move(rgb);
  out.ldr = reinhard_tonemap(out.hdr, config.tonemap_key);
  return out;
}

struct DecompositionImages {
  RasterImage illumination;
  RasterImage reflectance;
};

/// Display versions of a decomposition: illumination gamma-encoded,
/// reflectance as (tanh(R) + 1) / 2.
inline DecompositionImages decomposition_images(const RasterImage& input, const PipelineConfig& config) {
  config.validate();
  if (!input.is_ldr()) throw RangeError("decompose: input samples must lie in [0, 1]");
  const Plane y_lin = gamma_map(rgb_to_ycbcr(to_rgb(input)).y, config.gamma_linearize);
  const auto dec = decompose(y_lin, config.wls);
  const Plane illum = clamp_plane(gamma_map(clamp_plane(dec.illumination, 0.0, 1.0), 1.0 / config.gamma_linearize),
                                  0.0, 1.0);
  Plane refl = bound_reflectance(dec.reflectance);
  for (auto& v : refl.storage()) v = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
  const Plane* pi[] = {&illum};
  const Plane* pr[] = {&refl};
  return {RasterImage::from_planes(pi), RasterImage::from_planes(pr)};
}

}  // namespace hdrsr
