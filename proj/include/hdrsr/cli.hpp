#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hdrsr/error.hpp"
#include "hdrsr/gradcheck.hpp"
#include "hdrsr/image_io.hpp"
#include "hdrsr/pipeline.hpp"
#include "hdrsr/refnet.hpp"
#include "hdrsr/tonemap.hpp"
#include "hdrsr/training.hpp"

namespace hdrsr {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

namespace detail {

struct InferArgs {
  std::string input, weights, out_hdr, out_ldr, config;
  std::optional<double> peak;
};

struct DecomposeArgs {
  std::string input, out_illum, out_refl, config;
};

struct PrepareArgs {
  std::string ldr_dir, hdr_dir, out, config;
};

struct TrainArgs {
  std::string data, mode = "basic", out, init, report, checkpoint;
  std::size_t steps = 1000, batch = 32, base = 36, depth = 3, disc_base = 16, checkpoint_every = 0;
  std::uint64_t seed = 1;
  double lr = 2e-4, mu = 1e-3;
};

struct GradcheckArgs {
  std::uint64_t seed = 1;
  std::size_t coordinates = 128;
  bool layers_only = false;
};

struct InitArgs {
  std::string out;
  std::size_t base = 36, depth = 3;
  std::uint64_t seed = 1;
  bool zero_output = false;
};

inline PipelineConfig pipeline_config_from(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

inline int run_infer(const InferArgs& a, std::ostream& out) {
  PipelineConfig cfg = pipeline_config_from(a.config);
  const std::string weights = a.weights.empty() ? cfg.weights_path : a.weights;
  if (weights.empty()) throw ConfigError("infer needs --weights or weights_path in the config file");
  const RefNet net = load_refnet(weights);
  const auto result = infer(read_ldr_image(a.input), net, cfg);
  write_hdr_image(a.peak ? linear_stretch(result.hdr, *a.peak) : result.hdr, a.out_hdr);
  write_ldr_image(result.ldr, a.out_ldr);
  out << "wrote " << a.out_hdr << " and " << a.out_ldr << " (" << result.hdr.width() << "x" << result.hdr.height()
      << ")\n";
  return kExitOk;
}

inline int run_decompose(const DecomposeArgs& a, std::ostream& out) {
  const auto images = decomposition_images(read_ldr_image(a.input), pipeline_config_from(a.config));
  write_ldr_image(images.illumination, a.out_illum);
  write_ldr_image(images.reflectance, a.out_refl);
  out << "wrote " << a.out_illum << " and " << a.out_refl << "\n";
  return kExitOk;
}

inline int run_prepare(const PrepareArgs& a, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = pipeline_config_from(a.config);
  PrepareOptions opt;
  opt.wls = cfg.wls;
  opt.gamma_linearize = cfg.gamma_linearize;
  opt.tonemap_key = cfg.tonemap_key;
  const PatchStore store = prepare_dataset(a.ldr_dir, a.hdr_dir, opt, &err);
  save_patch_store(store, a.out);
  out << "wrote " << store.pairs.size() << " patch pairs from " << store.sources.size() << " image pairs to "
      << a.out << "\n";
  return kExitOk;
}

inline int run_train(const TrainArgs& a, std::ostream& out) {
  const PatchStore store = load_patch_store(a.data);
  RefNet net = [&]() {
    if (!a.init.empty()) return load_refnet(a.init);
    RefNetConfig rc;
    rc.base_channels = a.base;
    rc.unet_depth = a.depth;
    rc.enforce_budget = false;
    return build_refnet(rc, a.seed);
  }();
  TrainConfig tc;
  tc.batch_size = a.batch;
  tc.lr_initial = a.lr;
  tc.lr_after_halving = a.lr / 2.0;
  tc.total_steps = a.steps;
  tc.mu = a.mu;
  tc.seed = a.seed;
  tc.mode = a.mode == "complex" ? TrainMode::complex : TrainMode::basic;
  tc.discriminator_base = a.disc_base;
  tc.checkpoint_every = a.checkpoint_every;
  tc.checkpoint_path = a.checkpoint.empty() ? a.out + ".ckpt" : a.checkpoint;
  std::ofstream report_file;
  std::ostream* report = &out;
  if (!a.report.empty()) {
    report_file.open(a.report);
    if (!report_file) throw WriteError("cannot open report file " + a.report);
    report = &report_file;
  }
  train(net, store, tc, a.out, report);
  return kExitOk;
}

inline int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  double worst = 0.0;
  out << std::setprecision(4);
  for (const auto& r : layer_gradient_suite(a.seed, a.coordinates)) {
    out << std::left << std::setw(22) << r.name << " max relative error " << std::scientific << r.max_relative_error
        << std::defaultfloat << " over " << r.coordinates << " coordinates\n";
    worst = std::max(worst, r.max_relative_error);
  }
  if (!a.layers_only) {
    RefNetConfig tiny;
    tiny.base_channels = 4;
    tiny.unet_depth = 2;
    tiny.enforce_budget = false;
    auto gen = build_refnet(tiny, a.seed);
    std::mt19937_64 rng(a.seed);
    const auto x = detail::random_tensor<float>(Shape{1, 8, 8, 1}, rng, -0.8, 0.8);
    auto disc = build_discriminator(4, a.seed + 1);
    const auto xd = detail::random_tensor<float>(Shape{2, 16, 16, 1}, rng, -0.8, 0.8);
    for (auto [name, r] : {std::pair{"refnet (tiny)", gradient_check(gen.net, x, a.seed, 0.01, 200)},
                           std::pair{"discriminator (tiny)", gradient_check(disc, xd, a.seed, 0.01, 200)}}) {
      out << std::left << std::setw(22) << name << " max relative error " << std::scientific << r.max_relative_error
          << std::defaultfloat << " over " << r.coordinates << " coordinates (" << r.skipped
          << " skipped at activation kinks)\n";
      worst = std::max(worst, r.max_relative_error);
    }
  }
  out << "max relative error " << std::scientific << worst << std::defaultfloat << " (tolerance "
      << kGradCheckTolerance << ")\n";
  return worst <= kGradCheckTolerance ? kExitOk : kExitNumerical;
}

inline int run_init(const InitArgs& a, std::ostream& out) {
  RefNetConfig rc;
  rc.base_channels = a.base;
  rc.unet_depth = a.depth;
  rc.enforce_budget = false;
  RefNet net = build_refnet(rc, a.seed);
  if (a.zero_output) zero_output_layer(net);
  save_weights(net.net.params(), a.out);
  out << "wrote " << net.net.parameter_count() << " parameters to " << a.out << "\n";
  return kExitOk;
}

}  // namespace detail

/// Command-line entry point. Exit codes: 0 success, 1 usage, 2 data or
/// format problems, 3 numerical failure.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Retinex-based HDR inverse tonemapping with x2 super-resolution"};
  app.require_subcommand(1);

  detail::InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "LDR image to x2 HDR irradiance map plus tonemapped preview");
  infer_cmd->add_option("--input", ia.input, "LDR PNG/PPM input")->required();
  infer_cmd->add_option("--weights", ia.weights, "REF-Net weight file (or weights_path in --config)");
  infer_cmd->add_option("--out-hdr", ia.out_hdr, "Radiance .hdr output")->required();
  infer_cmd->add_option("--out-ldr", ia.out_ldr, "tonemapped PNG output")->required();
  infer_cmd->add_option("--config", ia.config, "key=value configuration file");
  infer_cmd->add_option("--peak", ia.peak, "stretch the HDR output so its peak luminance equals this value")
      ->check(CLI::PositiveNumber);

  detail::DecomposeArgs da;
  auto* dec_cmd = app.add_subcommand("decompose", "write illumination and reflectance visualizations");
  dec_cmd->add_option("--input", da.input, "LDR PNG/PPM input")->required();
  dec_cmd->add_option("--out-illum", da.out_illum, "illumination PNG")->required();
  dec_cmd->add_option("--out-refl", da.out_refl, "reflectance PNG")->required();
  dec_cmd->add_option("--config", da.config, "key=value configuration file");

  detail::PrepareArgs pa;
  auto* prep_cmd = app.add_subcommand("prepare-data", "build a patch store from LDR / tonemapped HDR pairs");
  prep_cmd->add_option("--ldr-dir", pa.ldr_dir, "standard-exposure LDR images")->required();
  prep_cmd->add_option("--hdr-dir", pa.hdr_dir, "tonemapped HDR images (or linear .hdr files)")->required();
  prep_cmd->add_option("--out", pa.out, "patch store output")->required();
  prep_cmd->add_option("--config", pa.config, "key=value configuration file");

  detail::TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train REF-Net on a patch store");
  train_cmd->add_option("--data", ta.data, "patch store")->required();
  train_cmd->add_option("--mode", ta.mode, "basic (MAE) or complex (MAE + RaGAN)")
      ->check(CLI::IsMember({"basic", "complex"}));
  train_cmd->add_option("--steps", ta.steps, "number of iterations")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", ta.seed, "random seed");
  train_cmd->add_option("--out", ta.out, "final weight file")->required();
  train_cmd->add_option("--batch", ta.batch, "mini-batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", ta.lr, "initial learning rate, halved at 50% of the steps")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--mu", ta.mu, "adversarial loss weight (complex mode)")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--base", ta.base, "generator base channels")->check(CLI::PositiveNumber);
  train_cmd->add_option("--depth", ta.depth, "generator U-Net depth")->check(CLI::Range(1, 6));
  train_cmd->add_option("--disc-base", ta.disc_base, "discriminator base channels")->check(CLI::PositiveNumber);
  train_cmd->add_option("--init", ta.init, "start from this weight file instead of a fresh network");
  train_cmd->add_option("--report", ta.report, "write the per-step report here instead of stdout");
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "save a checkpoint every K steps (0: never)");
  train_cmd->add_option("--checkpoint", ta.checkpoint, "checkpoint path (default: <out>.ckpt)");

  detail::GradcheckArgs ga;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every layer's backward pass");
  gc_cmd->add_option("--seed", ga.seed, "random seed");
  gc_cmd->add_option("--coordinates", ga.coordinates, "sampled coordinates per layer type")
      ->check(CLI::Range(100, 100000));
  gc_cmd->add_flag("--layers-only", ga.layers_only, "skip the tiny whole-network checks");

  detail::InitArgs na;
  auto* init_cmd = app.add_subcommand("init-weights", "write a freshly initialized REF-Net weight file");
  init_cmd->add_option("--out", na.out, "weight file")->required();
  init_cmd->add_option("--base", na.base, "base channels")->check(CLI::PositiveNumber);
  init_cmd->add_option("--depth", na.depth, "U-Net depth")->check(CLI::Range(1, 6));
  init_cmd->add_option("--seed", na.seed, "initialization seed");
  init_cmd->add_flag("--zero-output", na.zero_output, "zero the last layer (network outputs zero reflectance)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (*infer_cmd) return detail::run_infer(ia, out);
    if (*dec_cmd) return detail::run_decompose(da, out);
    if (*prep_cmd) return detail::run_prepare(pa, out, err);
    if (*train_cmd) return detail::run_train(ta, out);
    if (*gc_cmd) return detail::run_gradcheck(ga, out);
    if (*init_cmd) return detail::run_init(na, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace hdrsr
