#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "hdrsr/error.hpp"
#include "hdrsr/network.hpp"

namespace hdrsr {

/// Generator hyperparameters. The defaults (36 base channels, three
/// downsamplings, doubling widths, two 3x3 convs per level) come to 8.19M
/// parameters.
struct RefNetConfig {
  std::size_t base_channels = 36;
  std::size_t unet_depth = 3;
  std::size_t scale = 2;
  double target_param_budget = 8'000'000.0;
  double budget_tolerance = 0.10;
  /// Reduced-size networks for tests and smoke runs switch the budget check off.
  bool enforce_budget = true;

  void validate() const {
    if (scale != 2) throw ConfigError("REF-Net only supports x2 upscaling");
    if (base_channels == 0) throw ConfigError("base_channels must be positive");
    if (unet_depth == 0 || unet_depth > 6) throw ConfigError("unet_depth must be in [1, 6]");
  }
};

/// The generator network together with the configuration it was built from.
struct RefNet {
  RefNetConfig config;
  Network<float> net{1};
};

namespace detail {

using NodeId = Network<float>::NodeId;

inline NodeId conv_relu(Network<float>& net, NodeId from, const std::string& name, std::size_t cout,
                        std::size_t stride = 1) {
  return net.relu(net.conv3x3(from, name, cout, stride));
}

// One hourglass: encoder levels with stride-2 downsampling, bottleneck, and a
// mirrored decoder (4x4 stride-2 transposed conv, concat with the encoder tap).
inline NodeId add_unet(Network<float>& net, NodeId from, const std::string& prefix, const RefNetConfig& cfg) {
  std::vector<NodeId> taps;
  std::vector<std::size_t> widths;
  for (std::size_t l = 0; l <= cfg.unet_depth; ++l) widths.push_back(cfg.base_channels << l);
  NodeId x = from;
  for (std::size_t l = 0; l < cfg.unet_depth; ++l) {
    const std::string level = prefix + ".enc" + std::to_string(l);
    x = conv_relu(net, x, level + ".conv0", widths[l]);
    x = conv_relu(net, x, level + ".conv1", widths[l]);
    taps.push_back(x);
    x = conv_relu(net, x, prefix + ".down" + std::to_string(l), widths[l + 1], 2);
  }
  x = conv_relu(net, x, prefix + ".bottleneck.conv0", widths[cfg.unet_depth]);
  x = conv_relu(net, x, prefix + ".bottleneck.conv1", widths[cfg.unet_depth]);
  for (std::size_t l = cfg.unet_depth; l-- > 0;) {
    const std::string level = prefix + ".dec" + std::to_string(l);
    x = net.relu(net.tconv4x4(x, prefix + ".up" + std::to_string(l), widths[l]));
    x = net.concat(taps[l], x);
    x = conv_relu(net, x, level + ".conv0", widths[l]);
    x = conv_relu(net, x, level + ".conv1", widths[l]);
  }
  return x;
}

}  // namespace detail

/// Two stacked U-Nets, the first one's output concatenated with the second's,
/// then a sub-pixel x2 upsampler and a tanh-bounded single-channel output.
inline RefNet build_refnet(const RefNetConfig& config, std::uint64_t seed = 1) {
  config.validate();
  RefNet r{config, Network<float>(1)};
  auto& net = r.net;
  const std::size_t b = config.base_channels;
  auto x = detail::conv_relu(net, net.input(), "input_conv", b);
  const auto first = detail::add_unet(net, x, "unet1", config);
  const auto second = detail::add_unet(net, first, "unet2", config);
  x = net.concat(first, second);
  x = detail::conv_relu(net, x, "fuse_conv", b);
  x = net.conv3x3(x, "subpixel_conv", config.scale * config.scale);
  x = net.pixel_shuffle(x, config.scale);
  x = net.conv3x3(x, "output_conv", 1);
  net.tanh(x);
  net.init_he(seed);

  if (config.enforce_budget) {
    const double count = static_cast<double>(net.parameter_count());
    const double lo = config.target_param_budget * (1.0 - config.budget_tolerance);
    const double hi = config.target_param_budget * (1.0 + config.budget_tolerance);
    if (count < lo || count > hi) {
      throw ConfigError("REF-Net has " + std::to_string(net.parameter_count()) + " parameters, outside [" +
                        std::to_string(static_cast<long long>(lo)) + ", " +
                        std::to_string(static_cast<long long>(hi)) + "]");
    }
  }
  return r;
}

/// Zeroes the last convolution, so the generator outputs tanh(0) = 0 everywhere.
inline void zero_output_layer(RefNet& r) {
  r.net.params().find("output_conv.weight")->value.fill(0.0f);
  r.net.params().find("output_conv.bias")->value.fill(0.0f);
}

/// Bounded low-resolution reflectance (1, H, W, 1) -> bounded (1, 2H, 2W, 1).
inline Tensor<float> refnet_forward(const RefNet& r, const Tensor<float>& bounded_r_ll) {
  const auto& s = bounded_r_ll.shape();
  if (s.c != 1) throw ShapeError("REF-Net input must have one channel");
  const std::size_t m = std::size_t{1} << r.config.unet_depth;
  if (s.h % m != 0 || s.w % m != 0) {
    throw ShapeError("REF-Net input dims " + s.str() + " must be divisible by " + std::to_string(m));
  }
  for (float v : bounded_r_ll.values()) {
    if (!(v > -1.0f && v < 1.0f)) throw RangeError("REF-Net input must lie strictly inside (-1, 1)");
  }
  return r.net.infer(bounded_r_ll);
}

/// Conv + LeakyReLU(0.2) stack, widths b, 2b, 4b, 8b, each stage ending in a
/// stride-2 conv, then global average pooling and a dense layer to one logit.
inline Network<float> build_discriminator(std::size_t base_channels, std::uint64_t seed = 2) {
  if (base_channels == 0) throw ConfigError("discriminator base_channels must be positive");
  Network<float> net(1);
  auto x = net.input();
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::size_t width = base_channels << stage;
    const std::string name = "disc.stage" + std::to_string(stage);
    x = net.leaky_relu(net.conv3x3(x, name + ".conv", width, 1), 0.2f);
    x = net.leaky_relu(net.conv3x3(x, name + ".down", width, 2), 0.2f);
  }
  x = net.global_avg_pool(x);
  net.dense(x, "disc.logit", base_channels << 3, 1);
  net.init_he(seed);
  return net;
}

// --- weight files -----------------------------------------------------------

inline constexpr char kWeightMagic[4] = {'H', 'S', 'R', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> slurp(const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(what + ": cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spill(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WriteError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WriteError("short write to " + path.string());
}

}  // namespace detail

inline void save_weights(const ParameterStore<float>& params, const std::filesystem::path& path) {
  std::vector<unsigned char> out(std::begin(kWeightMagic), std::end(kWeightMagic));
  detail::put_u32(out, kWeightVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(p.dims.size()));
    for (auto d : p.dims) detail::put_u32(out, d);
    for (float v : p.value.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  detail::spill(path, out);
}

inline std::vector<NamedTensor> load_weights(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path, "weight file");
  detail::ByteReader in(bytes, "weight file " + path.string());
  if (in.str(4) != std::string(kWeightMagic, 4)) throw FormatError("weight file: bad magic");
  if (const auto v = in.u32(); v != kWeightVersion) {
    throw FormatError("weight file: unsupported version " + std::to_string(v));
  }
  const std::uint32_t count = in.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.str(in.u32());
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 4) throw FormatError("weight file: tensor '" + t.name + "' has rank " + std::to_string(rank));
    std::size_t elements = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(in.u32());
      elements *= t.dims.back();
    }
    in.need(elements * 4);
    t.values.resize(elements);
    for (auto& v : t.values) v = in.f32();
    out.push_back(std::move(t));
  }
  if (!in.at_end()) throw FormatError("weight file: trailing bytes");
  return out;
}

/// Copies loaded tensors into a network, requiring an exact name and shape match.
inline void assign_weights(ParameterStore<float>& params, const std::vector<NamedTensor>& tensors) {
  if (tensors.size() != params.size()) {
    throw FormatError("weight file has " + std::to_string(tensors.size()) + " tensors, architecture expects " +
                      std::to_string(params.size()));
  }
  for (const auto& t : tensors) {
    auto* p = params.find(t.name);
    if (p == nullptr) throw FormatError("weight file: unknown tensor '" + t.name + "'");
    if (p->dims != t.dims) throw FormatError("weight file: dimension mismatch for tensor '" + t.name + "'");
    std::copy(t.values.begin(), t.values.end(), p->value.storage().begin());
  }
}

/// Rebuilds a generator from a weight file, reading the width and depth off the
/// tensor shapes.
inline RefNet load_refnet(const std::filesystem::path& path) {
  const auto tensors = load_weights(path);
  RefNetConfig cfg;
  cfg.enforce_budget = false;
  std::size_t depth = 0;
  bool found = false;
  for (const auto& t : tensors) {
    if (t.name == "input_conv.weight" && t.dims.size() == 4) {
      cfg.base_channels = t.dims[3];
      found = true;
    }
    if (t.name.rfind("unet1.down", 0) == 0 && t.name.ends_with(".weight")) ++depth;
  }
  if (!found || depth == 0) throw FormatError("weight file: not a REF-Net (missing input_conv or unet1.down*)");
  cfg.unet_depth = depth;
  auto r = build_refnet(cfg);
  assign_weights(r.net.params(), tensors);
  return r;
}

}  // namespace hdrsr
