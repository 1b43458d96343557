// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "hdrsr/cli.hpp"
#include "hdrsr/gradcheck.hpp"
#include "hdrsr/image_io.hpp"
#include "hdrsr/layers.hpp"
#include "hdrsr/pipeline.hpp"
#include "hdrsr/ragan.hpp"
#include "hdrsr/refnet.hpp"
#include "hdrsr/retinex.hpp"
#include "hdrsr/training.hpp"
#include "hdrsr/wls.hpp"

using namespace hdrsr;
namespace fs = std::filesystem;

namespace {

const fs::path kTinyWeights = fs::path(HDRSR_DATA_DIR) / "tiny_refnet.hsrw";

struct Outcome {
  bool pass;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

class ScratchDir {
 public:
  ScratchDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("hdrsr_acceptance_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& n) const { return path_ / n; }

 private:
  fs::path path_;
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Plane random_plane(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Plane p(h, w);
  for (auto& v : p.storage()) v = d(rng);
  return p;
}

Plane plus(Plane p, double d) {
  for (auto& v : p.storage()) v += d;
  return p;
}

double mean(const Plane& p) {
  double s = 0.0;
  for (double v : p.storage()) s += v;
  return s / double(p.size());
}

RasterImage test_image(std::size_t h, std::size_t w, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> f(0.05, 0.4), ph(0.0, 6.28);
  RasterImage img(h, w, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    const double fx = f(rng), fy = f(rng), p = ph(rng);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        img.at(y, x, c) = std::round(255.0 * (0.5 + 0.4 * std::sin(fx * x + p) * std::cos(fy * y))) / 255.0;
  }
  return img;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hdrsr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
}

RefNetConfig small_generator(std::size_t base, std::size_t depth) {
  RefNetConfig c;
  c.base_channels = base;
  c.unet_depth = depth;
  c.enforce_budget = false;
  return c;
}

// --- criteria ---------------------------------------------------------------

Outcome wls_oracle() {
  Stopwatch sw;
  std::mt19937_64 rng(101);
  const WlsParams p;  // lambda 2, alpha 2, epsilon 1e-4
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Plane g = random_plane(8, 8, rng);
    const Plane guide = plus(g, 1e-4);
    const Plane a = solve_wls(g, guide, p), b = dense_oracle_solve(g, guide, p);
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  const double s = sw.seconds();
  return {worst <= 1e-5 && s < 5.0, fmt("max abs error %.3g over 50 planes (<= 1e-5), %.2f s (< 5 s)", worst, s)};
}

Outcome wls_structure() {
  Stopwatch sw;
  std::mt19937_64 rng(102);
  std::uniform_int_distribution<std::size_t> side(2, 24);
  std::uniform_real_distribution<double> lam(0.1, 20.0);
  std::size_t failed = 0;
  for (int t = 0; t < 1000; ++t) {
    const Plane g = random_plane(side(rng), side(rng), rng);
    const Plane guide = plus(g, 1e-4);
    WlsParams p;
    p.lambda = lam(rng);
    bool ok = true;
    // SPD certificate: positive diagonal and strict diagonal dominance
    const auto wts = compute_smoothness_weights(guide, p);
    const auto sys = assemble_system(wts.ax, wts.ay, p.lambda);
    for (std::size_t y = 0; y < g.height(); ++y)
      for (std::size_t x = 0; x < g.width(); ++x) {
        const double d = sys.diagonal()[y * g.width() + x];
        ok &= d > 0.0 && d > -sys.off_diagonal_row_sum(y, x);
      }
    const Plane u = solve_wls(g, guide, p);
    ok &= std::abs(mean(u) - mean(g)) <= 1e-6 * std::abs(mean(g)) + 1e-12;
    const auto [lo, hi] = std::minmax_element(g.storage().begin(), g.storage().end());
    for (double v : u.storage()) ok &= v >= *lo - 1e-6 && v <= *hi + 1e-6;
    WlsParams zero = p;
    zero.lambda = 0.0;
    ok &= solve_wls(g, guide, zero) == g;
    failed += ok ? 0 : 1;
  }
  const double s = sw.seconds();
  return {failed == 0 && s < 30.0,
          fmt("%.0f of 1000 instances violated SPD / mean / maximum principle / lambda=0 identity, %.2f s (< 30 s)",
              double(failed), s)};
}

Outcome decomposition_round_trip() {
  Stopwatch sw;
  std::mt19937_64 rng(103);
  std::bernoulli_distribution black(0.05);
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    Plane y = random_plane(8, 8, rng);
    for (auto& v : y.storage())
      if (black(rng)) v = 0.0;
    const auto d = decompose(y, WlsParams{});
    const Plane back = recombine(d.illumination, d.reflectance);
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(back[i] - std::max(y[i], 1e-4)));
  }
  const double s = sw.seconds();
  return {worst <= 1e-6 && s < 10.0, fmt("max error %.3g over 1e4 planes (<= 1e-6), %.2f s (< 10 s)", worst, s)};
}

Outcome gradient_checks() {
  Stopwatch sw;
  const auto results = layer_gradient_suite(104, 128);
  const std::set<std::string> need{"conv3x3",     "conv3x3_stride2", "tconv4x4_stride2", "pixel_shuffle",
                                   "relu",        "leaky_relu",      "tanh",             "sigmoid",
                                   "global_avg_pool", "dense",       "mae",              "ragan_generator",
                                   "ragan_discriminator"};
  std::set<std::string> seen;
  double worst = 0.0;
  std::size_t fewest = SIZE_MAX;
  std::string worst_name;
  for (const auto& r : results) {
    seen.insert(r.name);
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = r.name;
    }
    fewest = std::min(fewest, r.coordinates);
  }
  bool all = true;
  for (const auto& n : need) all &= seen.count(n) > 0;
  const double s = sw.seconds();
  return {all && worst <= kGradCheckTolerance && fewest >= 100 && s < 120.0,
          fmt("%.0f layer types, worst relative error %.3g (<= 1e-3), min %.0f coordinates (>= 100), %.2f s (< 120 s)",
              double(results.size()), worst, double(fewest), s) +
              (all ? "" : " [missing layer types]") + " worst: " + worst_name};
}

Outcome tconv_adjoint() {
  std::mt19937_64 rng(105);
  std::uniform_int_distribution<std::size_t> dim(1, 6), ch(1, 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rnd = [&](Shape s) {
    Tensor<float> t(s);
    for (auto& v : t.storage()) v = static_cast<float>(u(rng));
    return t;
  };
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = dim(rng) % 2 + 1, h = dim(rng), w = dim(rng), ci = ch(rng), co = ch(rng);
    const auto x = rnd(Shape{n, h, w, ci});
    const auto k = rnd(Shape{4, 4, ci, co});
    const auto y = rnd(Shape{n, 2 * h, 2 * w, co});
    const double lhs = dot(tconv2d_forward<float>(x, k, {}, 2, 1), y);
    const double rhs = dot(x, conv2d_forward<float>(y, transpose_kernel(k), {}, 2, 1));
    worst = std::max(worst, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-12}));
  }
  return {worst <= 1e-4, fmt("worst relative gap <T x, y> vs <x, T* y> %.3g over 100 cases (<= 1e-4)", worst)};
}

Outcome ragan_point() {
  const double two_ln2 = 2.0 * std::log(2.0);
  double worst_point = 0.0, worst_shift = 0.0;
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> u(-5.0, 5.0), sh(-50.0, 50.0);
  for (int t = 0; t < 20; ++t) {
    const std::vector<double> same(1 + t, u(rng));
    worst_point = std::max({worst_point, std::abs(ragan_generator_loss<double>(same, same).loss - two_ln2),
                            std::abs(ragan_discriminator_loss<double>(same, same).loss - two_ln2)});
    std::vector<double> r(8), f(8);
    for (auto& v : r) v = u(rng);
    for (auto& v : f) v = u(rng);
    const double g0 = ragan_generator_loss<double>(r, f).loss, d0 = ragan_discriminator_loss<double>(r, f).loss;
    const double c = sh(rng);
    for (auto& v : r) v += c;
    for (auto& v : f) v += c;
    worst_shift = std::max({worst_shift, std::abs(ragan_generator_loss<double>(r, f).loss - g0),
                            std::abs(ragan_discriminator_loss<double>(r, f).loss - d0)});
  }
  return {worst_point <= 1e-6 && worst_shift <= 1e-6,
          fmt("|L - 2 ln 2| %.3g (<= 1e-6), shift change %.3g (<= 1e-6)", worst_point, worst_shift)};
}

Outcome parameter_budget() {
  Stopwatch sw;
  const auto net = build_refnet(RefNetConfig{});
  const double count = double(net.net.parameter_count());
  const double s = sw.seconds();
  return {count >= 7.2e6 && count <= 8.8e6 && s < 1.0,
          fmt("parameter_count %.0f (in [7.2M, 8.8M]), %.3f s (< 1 s)", count, s)};
}

Outcome shape_contracts() {
  const auto net = build_refnet(RefNetConfig{});
  Tensor<float> x(Shape{1, 48, 48, 1});
  std::mt19937_64 rng(107);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (auto& v : x.storage()) v = static_cast<float>(u(rng));
  const auto y = refnet_forward(net, x);
  const bool patch_ok = y.shape() == Shape{1, 96, 96, 1};

  ScratchDir dir;
  write_ldr_image(test_image(64, 64, 7), dir / "in.png");
  const int code = run_cli({"infer", "--input", (dir / "in.png").string(), "--weights", kTinyWeights.string(),
                            "--out-hdr", (dir / "o.hdr").string(), "--out-ldr", (dir / "o.png").string()});
  bool pipe_ok = code == 0;
  if (pipe_ok) {
    const auto hdr = read_hdr_image(dir / "o.hdr");
    const auto ldr = read_ldr_image(dir / "o.png");
    pipe_ok = hdr.height() == 128 && hdr.width() == 128 && ldr.height() == 128 && ldr.width() == 128;
  }
  return {patch_ok && pipe_ok, std::string("REF-Net (1,48,48,1) -> ") + y.shape().str() +
                                   ", pipeline 64x64 -> 128x128 HDR + LDR " + (pipe_ok ? "ok" : "FAILED")};
}

Outcome overfit_smoke() {
  Stopwatch sw;
  // one synthetic 48x48 patch through the default REF-Net, stopping at the
  // first step below 0.02; the 64-patch run uses a narrow generator to fit the
  // time budget on one core
  const auto one = synthetic_patch_store(1, 108, kPatchLr);
  auto gen = build_refnet(RefNetConfig{}, 2);
  TrainConfig cfg;
  cfg.total_steps = 2000;
  Trainer trainer(gen, one, cfg);
  double loss = 1.0;
  std::size_t steps = 0;
  while (steps < 2000 && loss >= 0.02) {
    loss = trainer.step().loss_recon;
    ++steps;
  }

  const auto many = synthetic_patch_store(64, 109, kPatchLr);
  auto gen2 = build_refnet(small_generator(4, 2), 1);
  TrainConfig cfg2;
  cfg2.total_steps = 200;
  cfg2.batch_size = 8;
  const auto rep = train(gen2, many, cfg2, {});
  const auto [first, last] = smoothed_endpoints(rep.steps);
  const double s = sw.seconds();
  const double reduction = 1.0 - last / first;
  return {loss < 0.02 && reduction >= 0.2 && s < 600.0,
          fmt("one patch: MAE %.4f after %.0f steps (< 0.02 within 2000); 64 patches: smoothed MAE down %.1f%% "
              "(>= 20%%); %.1f s (< 600 s)",
              loss, double(steps), 100.0 * reduction, s)};
}

Outcome complex_wiring() {
  const auto store = synthetic_patch_store(16, 110, 16);
  auto basic = build_refnet(small_generator(4, 2), 3), zero_mu = build_refnet(small_generator(4, 2), 3);
  TrainConfig cb;
  cb.total_steps = 20;
  cb.batch_size = 4;
  TrainConfig cz = cb;
  cz.mode = TrainMode::complex;
  cz.mu = 0.0;
  cz.discriminator_base = 4;
  const auto rb = train(basic, store, cb, {});
  const auto rz = train(zero_mu, store, cz, {});
  bool identical = true;
  for (std::size_t k = 0; k < basic.net.params().size(); ++k) {
    const auto& a = basic.net.params()[k].value.storage();
    const auto& b = zero_mu.net.params()[k].value.storage();
    identical &= a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
  }
  for (std::size_t i = 0; i < rb.steps.size(); ++i) identical &= rb.steps[i].loss_recon == rz.steps[i].loss_recon;

  auto adv = build_refnet(small_generator(4, 2), 4);
  TrainConfig ca = cz;
  ca.mu = 1e-3;
  ca.total_steps = 500;
  ca.batch_size = 2;
  bool finite = true;
  std::string why;
  try {
    const auto r = train(adv, store, ca, {});
    for (const auto& s : r.steps) finite &= std::isfinite(s.loss_g) && std::isfinite(s.loss_d);
    finite &= r.steps.size() == 500;
  } catch (const NumericalError& e) {
    finite = false;
    why = std::string(" (") + e.what() + ")";
  }
  return {identical && finite, std::string("mu=0 generator weights and losses ") +
                                   (identical ? "bit-identical to basic mode" : "DIFFER from basic mode") +
                                   "; mu=1e-3 losses over 500 steps " + (finite ? "finite" : "NOT finite") + why};
}

Outcome format_round_trips() {
  ScratchDir dir;
  // weights: default REF-Net
  const auto net = build_refnet(RefNetConfig{}, 5);
  save_weights(net.net.params(), dir / "w.hsrw");
  auto fresh = build_refnet(RefNetConfig{}, 6);
  assign_weights(fresh.net.params(), load_weights(dir / "w.hsrw"));
  bool weights_ok = true;
  for (std::size_t k = 0; k < net.net.params().size(); ++k) {
    const auto& a = net.net.params()[k].value.storage();
    const auto& b = fresh.net.params()[k].value.storage();
    weights_ok &= std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
  }
  save_weights(fresh.net.params(), dir / "w2.hsrw");
  weights_ok &= file_bytes(dir / "w.hsrw") == file_bytes(dir / "w2.hsrw");

  // patch store from real extraction
  PatchStore store;
  store.lr_size = kPatchLr;
  store.sources = {"scene"};
  store.pairs = prepare_pair(test_image(144, 144, 3), test_image(144, 144, 4), 0, PrepareOptions{});
  save_patch_store(store, dir / "p.hsrp");
  const auto back = load_patch_store(dir / "p.hsrp");
  save_patch_store(back, dir / "p2.hsrp");
  const bool store_ok = back == store && file_bytes(dir / "p.hsrp") == file_bytes(dir / "p2.hsrp");

  // RGBE on random triples over 40 octaves; error relative to the pixel peak
  std::mt19937_64 rng(111);
  std::uniform_real_distribution<double> m(0.0, 1.0), e(-20.0, 20.0);
  double worst_rgbe = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double sc = std::pow(2.0, e(rng));
    const double rgb[3] = {m(rng) * sc, m(rng) * sc, m(rng) * sc};
    const double peak = std::max({rgb[0], rgb[1], rgb[2]});
    if (peak == 0.0) continue;
    const auto d = decode_rgbe(encode_rgbe(rgb[0], rgb[1], rgb[2]));
    for (int c = 0; c < 3; ++c) worst_rgbe = std::max(worst_rgbe, std::abs(d[c] - rgb[c]) / peak);
  }

  // PNG: every 8-bit code in each channel
  RasterImage img(16, 48, 3);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 48; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = double((y * 16 + x + 85 * c) % 256) / 255.0;
  write_ldr_image(img, dir / "i.png");
  const auto png = read_ldr_image(dir / "i.png");
  bool png_ok = png.channels() == 3 && png.height() == 16 && png.width() == 48;
  for (std::size_t i = 0; png_ok && i < img.data().size(); ++i) png_ok &= png.data()[i] == img.data()[i];

  return {weights_ok && store_ok && worst_rgbe <= 1.0 / 256.0 && png_ok,
          std::string("weights ") + (weights_ok ? "bit-identical" : "DIFFER") + ", patch store (" +
              std::to_string(store.pairs.size()) + " pairs) " + (store_ok ? "bit-identical" : "DIFFERS") +
              fmt(", RGBE worst error/peak %.5f (<= %.5f)", worst_rgbe, 1.0 / 256.0) + ", PNG 8-bit " +
              (png_ok ? "identical" : "DIFFERS")};
}

Outcome end_to_end_determinism() {
  ScratchDir dir;
  write_ldr_image(test_image(48, 56, 9), dir / "in.png");
  bool ran = true;
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    const std::string cmd = std::string("\"") + HDRSR_CLI_PATH + "\" infer --input \"" + (dir / "in.png").string() +
                            "\" --weights \"" + kTinyWeights.string() + "\" --out-hdr \"" +
                            (dir / (t + ".hdr")).string() + "\" --out-ldr \"" + (dir / (t + ".png")).string() +
                            "\" > /dev/null";
    ran &= std::system(cmd.c_str()) == 0;
  }
  const auto ha = file_bytes(dir / "a.hdr"), hb = file_bytes(dir / "b.hdr");
  const auto la = file_bytes(dir / "a.png"), lb = file_bytes(dir / "b.png");
  const bool same = ran && !ha.empty() && !la.empty() && ha == hb && la == lb;
  return {same, std::string("two infer processes: ") + (same ? "byte-identical" : "DIFFER or failed") + " (" +
                    std::to_string(ha.size()) + " + " + std::to_string(la.size()) + " bytes)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"wls_oracle_equivalence", wls_oracle},
      {"wls_structural_suite", wls_structure},
      {"decomposition_round_trip", decomposition_round_trip},
      {"gradient_checks", gradient_checks},
      {"tconv_adjoint", tconv_adjoint},
      {"ragan_analytic_point", ragan_point},
      {"parameter_budget", parameter_budget},
      {"shape_contracts", shape_contracts},
      {"overfit_smoke", overfit_smoke},
      {"complex_mode_wiring", complex_wiring},
      {"format_round_trips", format_round_trips},
      {"end_to_end_determinism", end_to_end_determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
