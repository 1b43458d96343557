#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hdrsr/adam.hpp"
#include "hdrsr/error.hpp"
#include "hdrsr/image.hpp"
#include "hdrsr/image_io.hpp"
#include "hdrsr/layers.hpp"
#include "hdrsr/ragan.hpp"
#include "hdrsr/refnet.hpp"
#include "hdrsr/retinex.hpp"
#include "hdrsr/tonemap.hpp"
#include "hdrsr/wls.hpp"

namespace hdrsr {

inline constexpr std::size_t kPatchLr = 48;
inline constexpr std::size_t kPatchStride = 24;

/// Co-located bounded reflectance patches: r_ll is side x side, r_hh is
/// 2 side x 2 side. (y, x) is the LR top-left corner before augmentation.
struct PatchPair {
  std::vector<float> r_ll;
  std::vector<float> r_hh;
  std::uint32_t source = 0;
  std::uint32_t aug = 0;
  std::uint32_t y = 0;
  std::uint32_t x = 0;

  friend bool operator==(const PatchPair&, const PatchPair&) = default;
};

struct PatchStore {
  std::uint32_t lr_size = kPatchLr;
  std::vector<std::string> sources;
  std::vector<PatchPair> pairs;

  std::size_t hr_size() const noexcept { return 2 * std::size_t{lr_size}; }
  friend bool operator==(const PatchStore&, const PatchStore&) = default;
};

// --- dihedral augmentation --------------------------------------------------

/// Element `id` of the dihedral group on a square patch: a horizontal mirror
/// when id >= 4, then (id mod 4) quarter turns counter-clockwise. Id 0 is the
/// identity.
template <typename T>
std::vector<T> dihedral(std::span<const T> patch, std::size_t side, unsigned id) {
  if (id > 7) throw ParameterError("augmentation id must be in [0, 7]");
  if (patch.size() != side * side) throw ShapeError("dihedral: patch is not side x side");
  const std::size_t n = side - 1;
  std::vector<T> out(patch.size());
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      // walk back through the quarter turns, then the mirror
      std::size_t sy = y, sx = x;
      for (unsigned k = 0; k < id % 4; ++k) {
        const std::size_t ty = sx, tx = n - sy;
        sy = ty;
        sx = tx;
      }
      if (id >= 4) sx = n - sx;
      out[y * side + x] = patch[sy * side + sx];
    }
  }
  return out;
}

inline unsigned dihedral_inverse(unsigned id) {
  if (id > 7) throw ParameterError("augmentation id must be in [0, 7]");
  return id >= 4 ? id : (4 - id) % 4;
}

// --- patch store file -------------------------------------------------------

inline constexpr char kPatchMagic[4] = {'H', 'S', 'R', 'P'};
inline constexpr std::uint32_t kPatchVersion = 1;

/// Layout: magic, version, pair count, LR side, source-name table, one index
/// record (source, aug, y, x) per pair, then per pair the LR and HR floats.
inline void save_patch_store(const PatchStore& store, const std::filesystem::path& path) {
  const std::size_t lr = store.lr_size, hr = store.hr_size();
  std::vector<unsigned char> out(std::begin(kPatchMagic), std::end(kPatchMagic));
  detail::put_u32(out, kPatchVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(store.pairs.size()));
  detail::put_u32(out, store.lr_size);
  detail::put_u32(out, static_cast<std::uint32_t>(store.sources.size()));
  for (const auto& s : store.sources) {
    detail::put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  for (const auto& p : store.pairs) {
    for (auto v : {p.source, p.aug, p.y, p.x}) detail::put_u32(out, v);
  }
  out.reserve(out.size() + store.pairs.size() * (lr * lr + hr * hr) * 4);
  for (const auto& p : store.pairs) {
    if (p.r_ll.size() != lr * lr || p.r_hh.size() != hr * hr) throw ShapeError("patch store: pair has wrong size");
    for (float v : p.r_ll) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    for (float v : p.r_hh) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  detail::spill(path, out);
}

inline PatchStore load_patch_store(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path, "patch store");
  detail::ByteReader in(bytes, "patch store " + path.string());
  if (in.str(4) != std::string(kPatchMagic, 4)) throw FormatError("patch store: bad magic");
  if (const auto v = in.u32(); v != kPatchVersion) {
    throw FormatError("patch store: unsupported version " + std::to_string(v));
  }
  PatchStore store;
  const std::uint32_t count = in.u32();
  store.lr_size = in.u32();
  if (store.lr_size == 0) throw FormatError("patch store: zero patch size");
  const std::uint32_t nsrc = in.u32();
  for (std::uint32_t i = 0; i < nsrc; ++i) store.sources.push_back(in.str(in.u32()));
  store.pairs.resize(count);
  for (auto& p : store.pairs) {
    p.source = in.u32();
    p.aug = in.u32();
    p.y = in.u32();
    p.x = in.u32();
    if (p.aug > 7) throw FormatError("patch store: augmentation id out of range");
    if (nsrc != 0 && p.source >= nsrc) throw FormatError("patch store: source index out of range");
  }
  const std::size_t lr = store.lr_size, hr = store.hr_size();
  in.need(std::size_t{count} * (lr * lr + hr * hr) * 4);
  for (auto& p : store.pairs) {
    p.r_ll.resize(lr * lr);
    p.r_hh.resize(hr * hr);
    for (auto& v : p.r_ll) v = in.f32();
    for (auto& v : p.r_hh) v = in.f32();
  }
  if (!in.at_end()) throw FormatError("patch store: trailing bytes");
  return store;
}

// --- dataset preparation ----------------------------------------------------

struct PrepareOptions {
  WlsParams wls;
  double gamma_linearize = 2.2;
  double tonemap_key = 0.18;
  std::size_t lr_size = kPatchLr;
  std::size_t stride = kPatchStride;
};

/// Bounded reflectance of a display-referred luminance plane in [0, 1].
inline Plane bounded_reflectance_of(const Plane& y_display, const PrepareOptions& opt) {
  const Plane y_lin = gamma_map(clamp_plane(y_display, 0.0, 1.0), opt.gamma_linearize);
  return bound_reflectance(decompose(y_lin, opt.wls).reflectance);
}

inline std::vector<float> crop_patch(const Plane& p, std::size_t y0, std::size_t x0, std::size_t side) {
  std::vector<float> out(side * side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) out[y * side + x] = static_cast<float>(p.at(y0 + y, x0 + x));
  return out;
}

/// Aligned patches on a regular grid of the LR plane, 8 augmentations each, in
/// (grid row, grid column, aug id) order. The HR plane must be exactly 2x.
inline std::vector<PatchPair> extract_patches(const Plane& t_ll, const Plane& t_hh, std::uint32_t source,
                                              std::size_t side = kPatchLr, std::size_t stride = kPatchStride) {
  if (t_hh.height() != 2 * t_ll.height() || t_hh.width() != 2 * t_ll.width()) {
    throw DataError("extract_patches: HR plane is not twice the LR plane");
  }
  if (side == 0 || stride == 0) throw ParameterError("extract_patches: zero patch side or stride");
  std::vector<PatchPair> out;
  for (std::size_t y = 0; y + side <= t_ll.height(); y += stride) {
    for (std::size_t x = 0; x + side <= t_ll.width(); x += stride) {
      const auto lo = crop_patch(t_ll, y, x, side);
      const auto hi = crop_patch(t_hh, 2 * y, 2 * x, 2 * side);
      for (unsigned aug = 0; aug < 8; ++aug) {
        out.push_back(PatchPair{dihedral<float>(lo, side, aug), dihedral<float>(hi, 2 * side, aug), source, aug,
                                static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x)});
      }
    }
  }
  return out;
}

inline Plane even_crop(const Plane& p) {
  const std::size_t h = p.height() & ~std::size_t{1}, w = p.width() & ~std::size_t{1};
  if (h == p.height() && w == p.width()) return p;
  Plane out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(y, x) = p.at(y, x);
  return out;
}

/// Patch pairs from one standard-exposed LDR image and its tonemapped HDR
/// counterpart (both display-referred, same size).
inline std::vector<PatchPair> prepare_pair(const RasterImage& ldr, const RasterImage& hdr_tm, std::uint32_t source,
                                           const PrepareOptions& opt) {
  if (ldr.height() != hdr_tm.height() || ldr.width() != hdr_tm.width()) {
    throw DataError("LDR is " + std::to_string(ldr.width()) + "x" + std::to_string(ldr.height()) +
                    " but tonemapped HDR is " + std::to_string(hdr_tm.width()) + "x" +
                    std::to_string(hdr_tm.height()));
  }
  const Plane y_hr = even_crop(rgb_to_ycbcr(to_rgb(hdr_tm)).y);
  const Plane y_lr = bicubic_resize(even_crop(rgb_to_ycbcr(to_rgb(ldr)).y), 0.5);
  return extract_patches(bounded_reflectance_of(y_lr, opt), bounded_reflectance_of(y_hr, opt), source, opt.lr_size,
                         opt.stride);
}

namespace detail {

inline bool is_ldr_file(const std::filesystem::path& p) {
  const auto e = p.extension().string();
  return e == ".png" || e == ".PNG" || e == ".ppm" || e == ".PPM";
}

inline bool is_hdr_file(const std::filesystem::path& p) {
  const auto e = p.extension().string();
  return e == ".hdr" || e == ".HDR";
}

}  // namespace detail

/// Pairs files by basename. A tonemapped PNG/PPM in `hdr_tm_dir` is preferred;
/// failing that a linear Radiance .hdr is tonemapped with Reinhard first.
/// Unpaired files are reported on `log` and skipped.
inline PatchStore prepare_dataset(const std::filesystem::path& ldr_dir, const std::filesystem::path& hdr_tm_dir,
                                  const PrepareOptions& opt, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(ldr_dir)) throw DataError("not a directory: " + ldr_dir.string());
  if (!fs::is_directory(hdr_tm_dir)) throw DataError("not a directory: " + hdr_tm_dir.string());
  std::map<std::string, fs::path> ldr, hdr_tm, hdr_lin;
  for (const auto& e : fs::directory_iterator(ldr_dir)) {
    if (e.is_regular_file() && detail::is_ldr_file(e.path())) ldr[e.path().stem().string()] = e.path();
  }
  for (const auto& e : fs::directory_iterator(hdr_tm_dir)) {
    if (!e.is_regular_file()) continue;
    if (detail::is_ldr_file(e.path())) hdr_tm[e.path().stem().string()] = e.path();
    if (detail::is_hdr_file(e.path())) hdr_lin[e.path().stem().string()] = e.path();
  }
  PatchStore store;
  store.lr_size = static_cast<std::uint32_t>(opt.lr_size);
  for (const auto& [name, path] : ldr) {
    RasterImage target;
    if (auto it = hdr_tm.find(name); it != hdr_tm.end()) {
      target = read_ldr_image(it->second);
    } else if (auto jt = hdr_lin.find(name); jt != hdr_lin.end()) {
      if (log) *log << "note: " << name << ": tonemapping linear " << jt->second.filename().string()
                    << " with Reinhard\n";
      target = reinhard_tonemap(read_hdr_image(jt->second), opt.tonemap_key);
    } else {
      if (log) *log << "warning: no tonemapped HDR for " << path.filename().string() << ", skipped\n";
      continue;
    }
    const auto source = static_cast<std::uint32_t>(store.sources.size());
    auto pairs = prepare_pair(read_ldr_image(path), target, source, opt);
    if (pairs.empty() && log) *log << "warning: " << name << " is smaller than one patch\n";
    store.sources.push_back(name);
    for (auto& p : pairs) store.pairs.push_back(std::move(p));
  }
  for (const auto& m : {hdr_tm, hdr_lin}) {
    for (const auto& [name, path] : m) {
      if (!ldr.count(name) && log) *log << "warning: no LDR image for " << path.filename().string() << ", skipped\n";
    }
  }
  return store;
}

/// Smooth random textures in the bounded domain; r_ll is the bicubic half-size
/// of r_hh. Used for smoke runs that need no image files.
inline PatchStore synthetic_patch_store(std::size_t count, std::uint64_t seed, std::size_t lr_size = kPatchLr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(0.02, 0.25), phase(0.0, 6.283185307179586), amp(0.1, 0.3);
  PatchStore store;
  store.lr_size = static_cast<std::uint32_t>(lr_size);
  store.sources.push_back("synthetic");
  const std::size_t hr = 2 * lr_size;
  for (std::size_t k = 0; k < count; ++k) {
    Plane p(hr, hr);
    for (int term = 0; term < 3; ++term) {
      const double fy = freq(rng), fx = freq(rng), ph = phase(rng), a = amp(rng);
      for (std::size_t y = 0; y < hr; ++y)
        for (std::size_t x = 0; x < hr; ++x) p.at(y, x) += a * std::sin(fy * double(y) + fx * double(x) + ph);
    }
    const Plane lo = clamp_plane(bicubic_resize(p, 0.5), -0.95, 0.95);
    store.pairs.push_back(PatchPair{crop_patch(lo, 0, 0, lr_size), crop_patch(p, 0, 0, hr), 0, 0,
                                    static_cast<std::uint32_t>(k), 0});
  }
  return store;
}

// --- training ---------------------------------------------------------------

enum class TrainMode { basic, complex };

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr_initial = 2e-4;
  double lr_after_halving = 1e-4;
  /// Fraction of total_steps after which the rate drops to lr_after_halving.
  double halving_point = 0.5;
  std::size_t total_steps = 1000;
  double mu = 1e-3;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::basic;
  std::size_t discriminator_base = 16;
  /// 0 disables checkpoints.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(lr_initial > 0.0) || !(lr_after_halving > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(mu >= 0.0)) throw ConfigError("mu must be non-negative");
    if (!(halving_point >= 0.0 && halving_point <= 1.0)) throw ConfigError("halving_point must be in [0, 1]");
    if (discriminator_base == 0) throw ConfigError("discriminator_base must be positive");
  }

  double learning_rate(std::size_t step) const {
    return static_cast<double>(step) < halving_point * static_cast<double>(total_steps) ? lr_initial
                                                                                         : lr_after_halving;
  }
};

struct StepRecord {
  std::size_t step = 0;
  double loss_recon = 0.0;
  double loss_g = 0.0;
  double loss_d = 0.0;
  double lr = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::optional<std::filesystem::path> last_checkpoint;
};

inline void write_report_header(std::ostream& os) { os << "step,loss_recon,loss_G,loss_D,lr\n"; }

inline void write_report_line(std::ostream& os, const StepRecord& r) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << r.step << ',' << std::setprecision(9) << r.loss_recon << ',' << r.loss_g << ',' << r.loss_d << ','
     << r.lr << '\n';
  os.flags(flags);
  os.precision(prec);
}

/// Mean of the first and last `window` reconstruction losses.
inline std::pair<double, double> smoothed_endpoints(const std::vector<StepRecord>& steps, std::size_t window = 10) {
  if (steps.empty()) return {0.0, 0.0};
  window = std::min(window, steps.size());
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    first += steps[i].loss_recon;
    last += steps[steps.size() - 1 - i].loss_recon;
  }
  return {first / double(window), last / double(window)};
}

/// Drives the generator (and in complex mode a discriminator) through Adam
/// updates on the store. Batches walk a seeded permutation of the pairs,
/// reshuffled every epoch; a batch holds min(batch_size, pairs) samples.
class Trainer {
 public:
  Trainer(RefNet& generator, const PatchStore& store, TrainConfig config)
      : gen_(generator), store_(store), cfg_(std::move(config)), disc_(1), shuffle_rng_(cfg_.seed) {
    cfg_.validate();
    if (store_.pairs.empty()) throw DataError("training needs a non-empty patch store");
    const std::size_t m = std::size_t{1} << gen_.config.unet_depth;
    if (store_.lr_size % m != 0) throw ConfigError("patch size must be divisible by 2^unet_depth");
    for (const auto& p : store_.pairs) {
      if (p.r_ll.size() != std::size_t{store_.lr_size} * store_.lr_size ||
          p.r_hh.size() != store_.hr_size() * store_.hr_size()) {
        throw DataError("patch store holds a pair of the wrong size");
      }
    }
    batch_ = std::min(cfg_.batch_size, store_.pairs.size());
    gen_grads_ = gen_.net.make_gradients();
    if (cfg_.mode == TrainMode::complex) {
      disc_ = build_discriminator(cfg_.discriminator_base, cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
      disc_grads_ = disc_.make_gradients();
      scratch_grads_ = disc_.make_gradients();
    }
  }

  const Network<float>& discriminator() const noexcept { return disc_; }

  /// Runs one iteration and returns its losses.
  StepRecord step() {
    const std::size_t s = step_++;
    const double lr = cfg_.learning_rate(s);
    auto [x, target] = next_batch();
    StepRecord rec{s, 0.0, 0.0, 0.0, lr};

    if (cfg_.mode == TrainMode::complex) {
      const Tensor<float> fake = gen_.net.infer(x);
      const auto cache_real = disc_.forward(target);
      const auto cache_fake = disc_.forward(fake);
      const auto ld = ragan_discriminator_loss<float>(cache_real.output().values(), cache_fake.output().values());
      rec.loss_d = ld.loss;
      disc_grads_.zero();
      disc_.backward(cache_real, logits_tensor(ld.grad_real), disc_grads_);
      disc_.backward(cache_fake, logits_tensor(ld.grad_fake), disc_grads_);
      adam_step(disc_.params(), disc_grads_, disc_adam_, lr);
    }

    const auto cache = gen_.net.forward(x);
    auto mae = mae_loss(cache.output(), target);
    rec.loss_recon = mae.loss;
    Tensor<float> upstream = std::move(mae.grad);
    if (cfg_.mode == TrainMode::complex) {
      const Tensor<float> logits_real = disc_.infer(target);
      const auto cache_fake = disc_.forward(cache.output());
      const auto lg = ragan_generator_loss<float>(logits_real.values(), cache_fake.output().values());
      rec.loss_g = lg.loss;
      scratch_grads_.zero();
      const Tensor<float> adv = disc_.backward(cache_fake, logits_tensor(lg.grad_fake), scratch_grads_);
      if (cfg_.mu != 0.0) {
        const auto mu = static_cast<float>(cfg_.mu);
        for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] += mu * adv[i];
      }
    }
    if (!std::isfinite(rec.loss_recon) || !std::isfinite(rec.loss_g) || !std::isfinite(rec.loss_d)) {
      throw NumericalError("non-finite loss at step " + std::to_string(s) + "; last good checkpoint: " +
                           (last_checkpoint_ ? last_checkpoint_->string() : std::string("none")));
    }
    gen_grads_.zero();
    gen_.net.backward(cache, upstream, gen_grads_);
    adam_step(gen_.net.params(), gen_grads_, gen_adam_, lr);

    if (cfg_.checkpoint_every != 0 && step_ % cfg_.checkpoint_every == 0 && !cfg_.checkpoint_path.empty()) {
      save_weights(gen_.net.params(), cfg_.checkpoint_path);
      last_checkpoint_ = cfg_.checkpoint_path;
    }
    return rec;
  }

  const std::optional<std::filesystem::path>& last_checkpoint() const noexcept { return last_checkpoint_; }

 private:
  std::pair<Tensor<float>, Tensor<float>> next_batch() {
    const std::size_t lr = store_.lr_size, hr = store_.hr_size();
    Tensor<float> x(Shape{batch_, lr, lr, 1}), t(Shape{batch_, hr, hr, 1});
    for (std::size_t b = 0; b < batch_; ++b) {
      if (cursor_ == order_.size()) {
        order_.resize(store_.pairs.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::shuffle(order_.begin(), order_.end(), shuffle_rng_);
        cursor_ = 0;
      }
      const auto& p = store_.pairs[order_[cursor_++]];
      std::copy(p.r_ll.begin(), p.r_ll.end(), x.data() + b * lr * lr);
      std::copy(p.r_hh.begin(), p.r_hh.end(), t.data() + b * hr * hr);
    }
    return {std::move(x), std::move(t)};
  }

  Tensor<float> logits_tensor(const std::vector<float>& g) const {
    return Tensor<float>(Shape{g.size(), 1, 1, 1}, g);
  }

  RefNet& gen_;
  const PatchStore& store_;
  TrainConfig cfg_;
  Network<float> disc_;
  GradientStore<float> gen_grads_, disc_grads_, scratch_grads_;
  AdamState<float> gen_adam_, disc_adam_;
  std::mt19937_64 shuffle_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t batch_ = 1;
  std::size_t step_ = 0;
  std::optional<std::filesystem::path> last_checkpoint_;
};

/// Full run: total_steps iterations, optional report stream, final weights
/// written to `out_weights` when it is non-empty.
inline TrainReport train(RefNet& generator, const PatchStore& store, const TrainConfig& config,
                         const std::filesystem::path& out_weights, std::ostream* report = nullptr) {
  Trainer trainer(generator, store, config);
  TrainReport result;
  if (report) write_report_header(*report);
  for (std::size_t s = 0; s < config.total_steps; ++s) {
    result.steps.push_back(trainer.step());
    if (report) write_report_line(*report, result.steps.back());
  }
  result.last_checkpoint = trainer.last_checkpoint();
  if (!out_weights.empty()) save_weights(generator.net.params(), out_weights);
  return result;
}

}  // namespace hdrsr
