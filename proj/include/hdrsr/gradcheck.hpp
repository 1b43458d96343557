#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hdrsr/layers.hpp"
#include "hdrsr/network.hpp"
#include "hdrsr/ragan.hpp"
#include "hdrsr/tensor.hpp"

namespace hdrsr {

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  // coordinates left out because the perturbation crossed a ReLU-style kink
  std::size_t skipped = 0;
};

inline constexpr double kGradCheckStep = 1e-3;
inline constexpr double kGradCheckTolerance = 1e-3;
/// Denominator floor of the relative error; below it the comparison is absolute.
inline constexpr double kGradCheckFloor = 1e-3;

inline double gradient_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
}

namespace detail {

struct CoordinateCheck {
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Central differences over sampled coordinates of `values`, compared against
/// `analytic`. Perturbed values are rounded to T and the divisor is the step
/// actually taken. `sync(idx)` runs after every write so mirrors can follow.
/// With `skip_kinks`, coordinates whose two one-sided slopes disagree by more
/// than the tolerance are counted as skipped instead of compared: the loss is
/// not (numerically) differentiable within one step there. A kink is a
/// property of the forward map, so skipping never hides a backward error; it
/// only lowers coverage, which callers see in `skipped`.
template <typename T>
CoordinateCheck check_coordinates(std::span<T> values, std::span<const T> analytic,
                                  const std::vector<std::size_t>& coords, const std::function<double()>& loss,
                                  double step, const std::function<void(std::size_t)>& sync = {},
                                  bool skip_kinks = false) {
  CoordinateCheck out;
  const double centre = skip_kinks ? loss() : 0.0;
  for (std::size_t idx : coords) {
    const T saved = values[idx];
    const T hi = static_cast<T>(static_cast<double>(saved) + step);
    const T lo = static_cast<T>(static_cast<double>(saved) - step);
    auto eval = [&](T v) {
      values[idx] = v;
      if (sync) sync(idx);
      return loss();
    };
    const double up = eval(hi);
    const double down = eval(lo);
    values[idx] = saved;
    if (sync) sync(idx);
    if (skip_kinks) {
      const double right = (up - centre) / (static_cast<double>(hi) - static_cast<double>(saved));
      const double left = (centre - down) / (static_cast<double>(saved) - static_cast<double>(lo));
      if (std::abs(right - left) >
          kGradCheckTolerance * std::max({std::abs(right), std::abs(left), kGradCheckFloor})) {
        ++out.skipped;
        continue;
      }
    }
    const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
    out.worst = std::max(out.worst, gradient_relative_error(static_cast<double>(analytic[idx]), numeric));
    ++out.checked;
  }
  return out;
}

inline std::vector<std::size_t> sample_indices(std::size_t size, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> all(size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count >= size) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

template <typename T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.storage()) v = static_cast<T>(d(rng));
  return t;
}

/// Uniform values with magnitude in [margin, 1], random sign; keeps clear of kinks.
template <typename T>
Tensor<T> random_away_from_zero(Shape s, std::mt19937_64& rng, double margin) {
  std::uniform_real_distribution<double> mag(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<T> t(s);
  for (auto& v : t.storage()) v = static_cast<T>(sign(rng) ? mag(rng) : -mag(rng));
  return t;
}

inline std::vector<double> widen(std::span<const float> v) { return {v.begin(), v.end()}; }

}  // namespace detail

/// Finite-difference check of a whole network: loss = <c, f(x)> with a fixed
/// random projection c; `fraction` of the parameter coordinates (at least
/// `min_coordinates`) are perturbed by +-step. Analytic gradients come from
/// the network's own precision; the loss is evaluated on a double-precision
/// mirror holding the same (rounded) weights. Coordinates whose perturbation
/// crosses an activation kink are reported in `skipped`.
template <typename T>
GradCheckResult gradient_check(Network<T>& net, const Tensor<T>& input, std::uint64_t seed, double fraction = 0.01,
                               std::size_t min_coordinates = 100, double step = kGradCheckStep) {
  std::mt19937_64 rng(seed);
  const auto cache = net.forward(input);
  const Tensor<T> projection = detail::random_tensor<T>(cache.output().shape(), rng);
  auto grads = net.make_gradients();
  net.backward(cache, projection, grads);

  Network<double> mirror = net.template cast<double>();
  const Tensor<double> input_d = tensor_cast<double>(input);
  const Tensor<double> projection_d = tensor_cast<double>(projection);
  const auto loss = [&]() { return dot(mirror.infer(input_d), projection_d); };

  // Flatten the parameter index space, then sample from it.
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : net.params()) {
    offsets.push_back(total);
    total += p.value.size();
  }
  const auto count = std::max<std::size_t>(min_coordinates, static_cast<std::size_t>(std::ceil(fraction * total)));
  const auto picks = detail::sample_indices(total, count, rng);
  GradCheckResult result{"network", 0.0, 0, 0};
  for (std::size_t k = 0; k < net.params().size(); ++k) {
    const std::size_t lo = offsets[k], hi = lo + net.params()[k].value.size();
    std::vector<std::size_t> local;
    for (std::size_t p : picks)
      if (p >= lo && p < hi) local.push_back(p - lo);
    if (local.empty()) continue;
    auto& source = net.params()[k].value;
    auto& target = mirror.params()[k].value;
    const auto sync = [&](std::size_t i) { target[i] = static_cast<double>(source[i]); };
    const auto r = detail::check_coordinates<T>(source.values(), grads[k].values(), local, loss, step, sync, true);
    result.max_relative_error = std::max(result.max_relative_error, r.worst);
    result.coordinates += r.checked;
    result.skipped += r.skipped;
  }
  return result;
}

/// Finite-difference checks for every layer kind the networks use, in single
/// precision, at least `coordinates` sampled coordinates each.
inline std::vector<GradCheckResult> layer_gradient_suite(std::uint64_t seed, std::size_t coordinates = 128) {
  using T = float;
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> results;
  const double h = kGradCheckStep;

  // Checks the input and every listed parameter of a layer under loss <c, f(...)>.
  // `forward` is the layer under test, `oracle` the same map accumulated in
  // double from the current single-precision values.
  auto run = [&](const std::string& name, const std::function<Tensor<T>()>& forward,
                 const std::function<Tensor<double>()>& oracle, const std::vector<std::span<T>>& targets,
                 const std::function<std::vector<std::vector<T>>(const Tensor<T>&)>& backward) {
    const Tensor<T> out = forward();
    const Tensor<T> c = detail::random_tensor<T>(out.shape(), rng);
    const Tensor<double> c_d = tensor_cast<double>(c);
    const auto analytic = backward(c);
    const auto loss = [&]() { return dot(oracle(), c_d); };
    std::size_t total = 0;
    for (const auto& t : targets) total += t.size();
    GradCheckResult r{name, 0.0, 0, 0};
    for (std::size_t k = 0; k < targets.size(); ++k) {
      // Spread the budget proportionally, at least a handful per target.
      const auto share = std::max<std::size_t>(
          std::min<std::size_t>(targets[k].size(), 8),
          (coordinates * targets[k].size() + total - 1) / total);
      const auto idx = detail::sample_indices(targets[k].size(), share, rng);
      const auto res = detail::check_coordinates<T>(targets[k], std::span<const T>(analytic[k]), idx, loss, h);
      r.coordinates += res.checked;
      r.max_relative_error = std::max(r.max_relative_error, res.worst);
    }
    results.push_back(r);
  };
  const auto wide = [](const Tensor<T>& t) { return tensor_cast<double>(t); };

  auto conv_case = [&](const std::string& name, Shape in_shape, Shape k_shape, std::size_t stride, std::size_t pad,
                       bool transposed) {
    Tensor<T> x = detail::random_tensor<T>(in_shape, rng);
    Tensor<T> w = detail::random_tensor<T>(k_shape, rng, -0.5, 0.5);
    std::vector<T> b(k_shape.c);
    for (auto& v : b) v = static_cast<T>(std::uniform_real_distribution<double>(-0.5, 0.5)(rng));
    auto fwd = [&]() {
      return transposed ? tconv2d_forward<T>(x, w, b, stride, pad) : conv2d_forward<T>(x, w, b, stride, pad);
    };
    auto oracle = [&]() {
      const auto bd = detail::widen(b);
      return transposed ? tconv2d_forward_reference<double>(wide(x), wide(w), bd, stride, pad)
                        : conv2d_forward_reference<double>(wide(x), wide(w), bd, stride, pad);
    };
    run(name, fwd, oracle, {x.values(), w.values(), std::span<T>(b)}, [&](const Tensor<T>& g) {
      auto cg = transposed ? tconv2d_backward<T>(x, w, g, stride, pad) : conv2d_backward<T>(x, w, g, stride, pad);
      return std::vector<std::vector<T>>{cg.input.storage(), cg.weight.storage(), cg.bias};
    });
  };
  conv_case("conv3x3", Shape{2, 6, 5, 3}, Shape{3, 3, 3, 4}, 1, 1, false);
  conv_case("conv3x3_stride2", Shape{2, 7, 6, 3}, Shape{3, 3, 3, 4}, 2, 1, false);
  conv_case("tconv4x4_stride2", Shape{2, 3, 4, 3}, Shape{4, 4, 3, 2}, 2, 1, true);

  {
    Tensor<T> x = detail::random_tensor<T>(Shape{2, 3, 3, 8}, rng);
    run("pixel_shuffle", [&]() { return pixel_shuffle(x, 2); }, [&]() { return pixel_shuffle(wide(x), 2); },
        {x.values()},
        [&](const Tensor<T>& g) { return std::vector<std::vector<T>>{pixel_unshuffle(g, 2).storage()}; });
  }
  {
    Tensor<T> a = detail::random_tensor<T>(Shape{2, 3, 3, 4}, rng);
    Tensor<T> b = detail::random_tensor<T>(Shape{2, 3, 3, 3}, rng);
    run("concat", [&]() { return concat_channels(a, b); }, [&]() { return concat_channels(wide(a), wide(b)); },
        {a.values(), b.values()}, [&](const Tensor<T>& g) {
          auto [ga, gb] = split_channels(g, 4);
          return std::vector<std::vector<T>>{ga.storage(), gb.storage()};
        });
  }
  const Shape act_shape{2, 5, 5, 6};
  {
    Tensor<T> x = detail::random_away_from_zero<T>(act_shape, rng, 1e-2);
    run("relu", [&]() { return relu_forward(x); }, [&]() { return relu_forward(wide(x)); }, {x.values()},
        [&](const Tensor<T>& g) { return std::vector<std::vector<T>>{relu_backward(x, g).storage()}; });
  }
  {
    Tensor<T> x = detail::random_away_from_zero<T>(act_shape, rng, 1e-2);
    run("leaky_relu", [&]() { return leaky_relu_forward(x, T(0.2)); },
        [&]() { return leaky_relu_forward(wide(x), static_cast<double>(T(0.2))); }, {x.values()},
        [&](const Tensor<T>& g) {
          return std::vector<std::vector<T>>{leaky_relu_backward(x, g, T(0.2)).storage()};
        });
  }
  {
    Tensor<T> x = detail::random_tensor<T>(act_shape, rng, -2.0, 2.0);
    run("tanh", [&]() { return tanh_forward(x); }, [&]() { return tanh_forward(wide(x)); }, {x.values()},
        [&](const Tensor<T>& g) {
          return std::vector<std::vector<T>>{tanh_backward(tanh_forward(x), g).storage()};
        });
  }
  {
    Tensor<T> x = detail::random_tensor<T>(act_shape, rng, -3.0, 3.0);
    run("sigmoid", [&]() { return sigmoid_forward(x); }, [&]() { return sigmoid_forward(wide(x)); }, {x.values()},
        [&](const Tensor<T>& g) {
          return std::vector<std::vector<T>>{sigmoid_backward(sigmoid_forward(x), g).storage()};
        });
  }
  {
    Tensor<T> x = detail::random_tensor<T>(Shape{2, 4, 4, 8}, rng);
    run("global_avg_pool", [&]() { return global_avg_pool_forward(x); },
        [&]() { return global_avg_pool_forward(wide(x)); }, {x.values()}, [&](const Tensor<T>& g) {
          return std::vector<std::vector<T>>{global_avg_pool_backward(x.shape(), g).storage()};
        });
  }
  {
    Tensor<T> x = detail::random_tensor<T>(Shape{3, 1, 1, 16}, rng);
    Tensor<T> w = detail::random_tensor<T>(Shape{1, 1, 16, 4}, rng, -0.5, 0.5);
    std::vector<T> b(4, T(0.1));
    run("dense", [&]() { return dense_forward<T>(x, w, b); },
        [&]() { return dense_forward<double>(wide(x), wide(w), detail::widen(b)); },
        {x.values(), w.values(), std::span<T>(b)}, [&](const Tensor<T>& g) {
          auto dg = dense_backward(x, w, g);
          return std::vector<std::vector<T>>{dg.input.storage(), dg.weight.storage(), dg.bias};
        });
  }

  // Scalar losses: the loss itself is the checked function.
  auto run_scalar = [&](const std::string& name, std::vector<std::span<T>> targets,
                        const std::vector<std::vector<T>>& analytic, const std::function<double()>& loss) {
    GradCheckResult r{name, 0.0, 0, 0};
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const auto idx = detail::sample_indices(targets[k].size(), targets[k].size(), rng);
      const auto res = detail::check_coordinates<T>(targets[k], std::span<const T>(analytic[k]), idx, loss, h);
      r.coordinates += res.checked;
      r.max_relative_error = std::max(r.max_relative_error, res.worst);
    }
    results.push_back(r);
  };
  {
    Tensor<T> p = detail::random_tensor<T>(Shape{2, 8, 8, 1}, rng);
    Tensor<T> t = p;
    // keep |p - t| well above the step so no coordinate crosses the kink
    const Tensor<T> offset = detail::random_away_from_zero<T>(p.shape(), rng, 0.05);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = p[i] + offset[i];
    const auto res = mae_loss(p, t);
    run_scalar("mae", {p.values()}, {res.grad.storage()}, [&]() { return mae_loss(p, t).loss; });
  }
  {
    Tensor<T> real = detail::random_tensor<T>(Shape{64, 1, 1, 1}, rng, -3.0, 3.0);
    Tensor<T> fake = detail::random_tensor<T>(Shape{64, 1, 1, 1}, rng, -3.0, 3.0);
    const auto g = ragan_generator_loss<T>(real.values(), fake.values());
    run_scalar("ragan_generator", {real.values(), fake.values()}, {g.grad_real, g.grad_fake},
               [&]() { return ragan_generator_loss<T>(real.values(), fake.values()).loss; });
    const auto d = ragan_discriminator_loss<T>(real.values(), fake.values());
    run_scalar("ragan_discriminator", {real.values(), fake.values()}, {d.grad_real, d.grad_fake},
               [&]() { return ragan_discriminator_loss<T>(real.values(), fake.values()).loss; });
  }
  return results;
}

}  // namespace hdrsr
