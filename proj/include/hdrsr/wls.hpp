#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hdrsr/error.hpp"
#include "hdrsr/image.hpp"

namespace hdrsr {

/// Weighted-least-squares smoothing parameters. Defaults are the values used
/// for both training and inference.
struct WlsParams {
  double lambda = 2.0;
  double alpha = 2.0;
  double epsilon = 1e-4;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("WLS lambda must be >= 0");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("WLS alpha must be > 0");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ParameterError("WLS epsilon must be > 0");
  }
};

struct SmoothnessWeights {
  Plane ax;  // edge (y,x)-(y,x+1); last column unused
  Plane ay;  // edge (y,x)-(y+1,x); last row unused
};

/// a = (|grad ln g|^alpha + eps)^-1 with forward differences. Boundary entries
/// see a zero gradient.
inline SmoothnessWeights compute_smoothness_weights(const Plane& guidance, const WlsParams& params) {
  params.validate();
  const std::size_t h = guidance.height(), w = guidance.width();
  Plane log_g(h, w);
  for (std::size_t i = 0; i < guidance.size(); ++i) {
    if (!(guidance[i] > 0.0) || !std::isfinite(guidance[i])) {
      throw RangeError("WLS guidance must be positive and finite");
    }
    log_g[i] = std::log(guidance[i]);
  }
  auto weight = [&](double diff) { return 1.0 / (std::pow(std::abs(diff), params.alpha) + params.epsilon); };
  SmoothnessWeights out{Plane(h, w), Plane(h, w)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double l = log_g.at(y, x);
      out.ax.at(y, x) = weight(x + 1 < w ? log_g.at(y, x + 1) - l : 0.0);
      out.ay.at(y, x) = weight(y + 1 < h ? log_g.at(y + 1, x) - l : 0.0);
    }
  }
  return out;
}

/// (Id + lambda * L_w) on a 4-neighbour grid. Each off-diagonal is stored once:
/// east(y,x) couples (y,x)-(y,x+1), south(y,x) couples (y,x)-(y+1,x).
class SparseFivePointSystem {
 public:
  SparseFivePointSystem(std::size_t height, std::size_t width)
      : height_(height),
        width_(width),
        diagonal_(height * width, 1.0),
        east_(height * (width > 0 ? width - 1 : 0), 0.0),
        south_((height > 0 ? height - 1 : 0) * width, 0.0) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t n() const noexcept { return diagonal_.size(); }

  std::vector<double>& diagonal() noexcept { return diagonal_; }
  const std::vector<double>& diagonal() const noexcept { return diagonal_; }
  double& east(std::size_t y, std::size_t x) { return east_[y * (width_ - 1) + x]; }
  double east(std::size_t y, std::size_t x) const { return east_[y * (width_ - 1) + x]; }
  double& south(std::size_t y, std::size_t x) { return south_[y * width_ + x]; }
  double south(std::size_t y, std::size_t x) const { return south_[y * width_ + x]; }
  const std::vector<double>& east_weights() const noexcept { return east_; }
  const std::vector<double>& south_weights() const noexcept { return south_; }

  /// Sum of the off-diagonal entries in row p.
  double off_diagonal_row_sum(std::size_t y, std::size_t x) const {
    double s = 0.0;
    if (x + 1 < width_) s += east(y, x);
    if (x > 0) s += east(y, x - 1);
    if (y + 1 < height_) s += south(y, x);
    if (y > 0) s += south(y - 1, x);
    return s;
  }

  /// out = A * in. Row order is fixed, so results are bit-reproducible.
  void multiply(const std::vector<double>& in, std::vector<double>& out) const {
    out.resize(n());
    for (std::size_t y = 0; y < height_; ++y) {
      for (std::size_t x = 0; x < width_; ++x) {
        const std::size_t p = y * width_ + x;
        double acc = diagonal_[p] * in[p];
        if (x + 1 < width_) acc += east(y, x) * in[p + 1];
        if (x > 0) acc += east(y, x - 1) * in[p - 1];
        if (y + 1 < height_) acc += south(y, x) * in[p + width_];
        if (y > 0) acc += south(y - 1, x) * in[p - width_];
        out[p] = acc;
      }
    }
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<double> diagonal_;
  std::vector<double> east_;
  std::vector<double> south_;
};

/// Normal equations of the WLS objective. Throws NumericalError if the result is
/// not strictly diagonally dominant with a positive diagonal (the SPD certificate).
inline SparseFivePointSystem assemble_system(const Plane& ax, const Plane& ay, double lambda) {
  if (!ax.same_shape(ay)) throw ShapeError("assemble_system: weight planes differ in shape");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("WLS lambda must be >= 0");
  const std::size_t h = ax.height(), w = ax.width();
  SparseFivePointSystem sys(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (x + 1 < w) sys.east(y, x) = -lambda * ax.at(y, x);
      if (y + 1 < h) sys.south(y, x) = -lambda * ay.at(y, x);
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double off = sys.off_diagonal_row_sum(y, x);
      const double diag = 1.0 - off;
      // Off-diagonals are non-positive, so |off| == -off and dominance margin is 1.
      if (!(off <= 0.0) || !(diag > 0.0) || !(diag + off >= 1.0 - 1e-9 * diag)) {
        throw NumericalError("assemble_system: matrix is not strictly diagonally dominant");
      }
      sys.diagonal()[y * w + x] = diag;
    }
  }
  return sys;
}

struct CgOptions {
  double tolerance = 1e-6;
  int max_iterations = 2000;
};

struct CgReport {
  int iterations = 0;
  double relative_residual = 0.0;
  /// r^T M^-1 r at every iteration, starting with the initial guess.
  std::vector<double> preconditioned_residual;
  /// 1/2 u^T A u - b^T u at every iteration; CG never increases it.
  std::vector<double> energy;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// Jacobi-preconditioned conjugate gradient on A u = b, starting from u.
inline CgReport conjugate_gradient(const SparseFivePointSystem& sys, const std::vector<double>& b,
                                   std::vector<double>& u, const CgOptions& options = {}) {
  const std::size_t n = sys.n();
  CgReport report;
  const double b_norm = std::sqrt(detail::dot(b, b));
  if (b_norm == 0.0) {
    std::fill(u.begin(), u.end(), 0.0);
    return report;
  }
  std::vector<double> r(n), z(n), p(n), ap(n);
  sys.multiply(u, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  const auto& diag = sys.diagonal();
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = detail::dot(r, z);
  // with A u = b - r the energy is -(u^T b + u^T r) / 2
  auto energy = [&]() { return -0.5 * (detail::dot(u, b) + detail::dot(u, r)); };
  report.preconditioned_residual.push_back(rz);
  report.energy.push_back(energy());
  report.relative_residual = std::sqrt(detail::dot(r, r)) / b_norm;

  while (report.relative_residual > options.tolerance) {
    if (report.iterations >= options.max_iterations) {
      throw SolverError("conjugate gradient did not converge", report.relative_residual, report.iterations);
    }
    sys.multiply(p, ap);
    const double pap = detail::dot(p, ap);
    if (!(pap > 0.0)) {
      throw SolverError("conjugate gradient breakdown", report.relative_residual, report.iterations);
    }
    const double step = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] += step * p[i];
      r[i] -= step * ap[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    const double rz_next = detail::dot(r, z);
    const double beta = rz_next / rz;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    rz = rz_next;
    ++report.iterations;
    report.preconditioned_residual.push_back(rz);
    report.energy.push_back(energy());
    report.relative_residual = std::sqrt(detail::dot(r, r)) / b_norm;
  }
  return report;
}

struct WlsResult {
  Plane output;
  CgReport report;
};

/// Minimizer of sum (u-g)^2 + lambda (ax |dx u|^2 + ay |dy u|^2), weights taken
/// from `guidance`. Warm-started from the input.
inline WlsResult solve_wls_report(const Plane& input, const Plane& guidance, const WlsParams& params,
                                  const CgOptions& options = {}) {
  if (!input.same_shape(guidance)) throw ShapeError("solve_wls: input and guidance differ in shape");
  if (input.empty()) throw ShapeError("solve_wls: empty input");
  const auto weights = compute_smoothness_weights(guidance, params);
  const auto sys = assemble_system(weights.ax, weights.ay, params.lambda);
  std::vector<double> u = input.storage();
  auto report = conjugate_gradient(sys, input.storage(), u, options);
  return {Plane(input.height(), input.width(), std::move(u)), std::move(report)};
}

inline Plane solve_wls(const Plane& input, const Plane& guidance, const WlsParams& params) {
  return solve_wls_report(input, guidance, params).output;
}

/// Test oracle: assembles the dense n x n matrix edge by edge and solves it by
/// Cholesky factorization. Limited to 4096 pixels.
inline Plane dense_oracle_solve(const Plane& input, const Plane& guidance, const WlsParams& params) {
  if (!input.same_shape(guidance)) throw ShapeError("dense_oracle_solve: shape mismatch");
  const std::size_t n = input.size();
  if (n > 4096) throw SizeError("dense_oracle_solve supports at most 4096 pixels, got " + std::to_string(n));
  const std::size_t h = input.height(), w = input.width();
  const auto weights = compute_smoothness_weights(guidance, params);

  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
  auto add_edge = [&](std::size_t p, std::size_t q, double weight) {
    const double c = params.lambda * weight;
    a[p * n + p] += c;
    a[q * n + q] += c;
    a[p * n + q] -= c;
    a[q * n + p] -= c;
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      if (x + 1 < w) add_edge(p, p + 1, weights.ax.at(y, x));
      if (y + 1 < h) add_edge(p, p + w, weights.ay.at(y, x));
    }
  }

  // In-place lower Cholesky factor.
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) throw NumericalError("dense_oracle_solve: matrix not positive definite");
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
  }
  std::vector<double> x = input.storage();
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * x[k];
    x[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * x[k];
    x[i] = s / a[i * n + i];
  }
  return Plane(h, w, std::move(x));
}

}  // namespace hdrsr
