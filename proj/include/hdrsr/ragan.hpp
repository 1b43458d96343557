#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hdrsr/error.hpp"

namespace hdrsr {

template <typename T>
struct RaganLoss {
  double loss = 0.0;
  std::vector<T> grad_real;
  std::vector<T> grad_fake;
};

namespace detail {

// log(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid_d(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -E[log sigmoid(p - mean q)] - E[log(1 - sigmoid(q - mean p))] in logit space:
// -log sigmoid(a) = softplus(-a), -log(1 - sigmoid(b)) = softplus(b).
template <typename T>
RaganLoss<T> relativistic_average(std::span<const T> pos, std::span<const T> neg) {
  if (pos.empty() || neg.empty()) throw ParameterError("RaGAN loss of an empty batch");
  if (pos.size() != neg.size()) throw ParameterError("RaGAN loss needs equal-length logit vectors");
  const std::size_t n = pos.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double mean_pos = 0.0, mean_neg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_pos += static_cast<double>(pos[i]);
    mean_neg += static_cast<double>(neg[i]);
  }
  mean_pos *= inv_n;
  mean_neg *= inv_n;

  RaganLoss<T> out{0.0, std::vector<T>(n), std::vector<T>(n)};
  std::vector<double> d_a(n), d_b(n);
  double sum_d_a = 0.0, sum_d_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = static_cast<double>(pos[i]) - mean_neg;
    const double b = static_cast<double>(neg[i]) - mean_pos;
    out.loss += (softplus(-a) + softplus(b)) * inv_n;
    d_a[i] = -sigmoid_d(-a) * inv_n;
    d_b[i] = sigmoid_d(b) * inv_n;
    sum_d_a += d_a[i];
    sum_d_b += d_b[i];
  }
  // a_i depends on mean(neg), b_j on mean(pos).
  for (std::size_t i = 0; i < n; ++i) {
    out.grad_real[i] = static_cast<T>(d_a[i] - sum_d_b * inv_n);
    out.grad_fake[i] = static_cast<T>(d_b[i] - sum_d_a * inv_n);
  }
  return out;
}

}  // namespace detail

/// Generator side of the relativistic average GAN loss. Gradients are with
/// respect to both logit vectors.
template <typename T>
RaganLoss<T> ragan_generator_loss(std::span<const T> logits_real, std::span<const T> logits_fake) {
  return detail::relativistic_average(logits_real, logits_fake);
}

/// Discriminator side: the generator loss with the roles of real and fake swapped.
template <typename T>
RaganLoss<T> ragan_discriminator_loss(std::span<const T> logits_real, std::span<const T> logits_fake) {
  auto swapped = detail::relativistic_average(logits_fake, logits_real);
  std::swap(swapped.grad_real, swapped.grad_fake);
  return swapped;
}

}  // namespace hdrsr
