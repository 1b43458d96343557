#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hdrsr/error.hpp"
#include "hdrsr/tensor.hpp"

namespace hdrsr {

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  std::vector<T> bias;
};

namespace detail {

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) throw ShapeError("convolution input smaller than kernel");
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void check_conv(const Tensor<T>& input, const Tensor<T>& weight, std::size_t bias_size, std::size_t stride) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (input.shape().c != weight.shape().w) {
    throw ShapeError("channel mismatch: input has " + std::to_string(input.shape().c) + ", kernel expects " +
                     std::to_string(weight.shape().w));
  }
  if (bias_size != 0 && bias_size != weight.shape().c) throw ShapeError("bias length does not match kernel");
}

}  // namespace detail

// --- convolution -----------------------------------------------------------

/// Swaps the in/out axes of a (kh, kw, in, out) kernel.
template <typename T>
Tensor<T> transpose_kernel(const Tensor<T>& weight) {
  const auto& s = weight.shape();
  Tensor<T> out(Shape{s.n, s.h, s.c, s.w});
  for (std::size_t y = 0; y < s.n; ++y)
    for (std::size_t x = 0; x < s.h; ++x)
      for (std::size_t i = 0; i < s.w; ++i)
        for (std::size_t o = 0; o < s.c; ++o) out.at(y, x, o, i) = weight.at(y, x, i, o);
  return out;
}

/// Zero-padded cross-correlation. Kernel shape is (kh, kw, in, out); output spatial
/// size is (in + 2 pad - k) / stride + 1. Empty bias means no bias.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, std::span<const T> bias,
                         std::size_t stride, std::size_t pad) {
  detail::check_conv(input, weight, bias.size(), stride);
  const auto& is = input.shape();
  const auto& ks = weight.shape();
  const std::size_t oh = detail::conv_out_size(is.h, ks.n, stride, pad);
  const std::size_t ow = detail::conv_out_size(is.w, ks.h, stride, pad);
  const std::size_t ci = ks.w, co = ks.c;
  Tensor<T> out(Shape{is.n, oh, ow, co});
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T* o = out.data() + out.offset(n, oy, ox);
        if (!bias.empty()) std::copy(bias.begin(), bias.end(), o);
        for (std::size_t ky = 0; ky < ks.n; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(is.h)) continue;
          for (std::size_t kx = 0; kx < ks.h; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(is.w)) continue;
            const T* in = input.data() + input.offset(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            const T* wk = weight.data() + (ky * ks.h + kx) * ci * co;
            for (std::size_t c = 0; c < ci; ++c) {
              const T v = in[c];
              const T* wr = wk + c * co;
              for (std::size_t k = 0; k < co; ++k) o[k] += v * wr[k];
            }
          }
        }
      }
    }
  }
  return out;
}

/// Straightforward per-output summation; the reference the fast path is held to.
template <typename T>
Tensor<T> conv2d_forward_reference(const Tensor<T>& input, const Tensor<T>& weight, std::span<const T> bias,
                                   std::size_t stride, std::size_t pad) {
  detail::check_conv(input, weight, bias.size(), stride);
  const auto& is = input.shape();
  const auto& ks = weight.shape();
  const std::size_t oh = detail::conv_out_size(is.h, ks.n, stride, pad);
  const std::size_t ow = detail::conv_out_size(is.w, ks.h, stride, pad);
  Tensor<T> out(Shape{is.n, oh, ow, ks.c});
  for (std::size_t n = 0; n < is.n; ++n)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t k = 0; k < ks.c; ++k) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[k]);
          for (std::size_t ky = 0; ky < ks.n; ++ky)
            for (std::size_t kx = 0; kx < ks.h; ++kx)
              for (std::size_t c = 0; c < ks.w; ++c) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(is.h) || ix >= static_cast<long>(is.w)) continue;
                acc += static_cast<double>(input.at(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), c)) *
                       static_cast<double>(weight.at(ky, kx, c, k));
              }
          out.at(n, oy, ox, k) = static_cast<T>(acc);
        }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                             std::size_t stride, std::size_t pad) {
  detail::check_conv(input, weight, 0, stride);
  const auto& is = input.shape();
  const auto& ks = weight.shape();
  const std::size_t oh = detail::conv_out_size(is.h, ks.n, stride, pad);
  const std::size_t ow = detail::conv_out_size(is.w, ks.h, stride, pad);
  if (grad_out.shape() != Shape{is.n, oh, ow, ks.c}) throw ShapeError("conv2d_backward: upstream gradient shape");
  const std::size_t ci = ks.w, co = ks.c;
  ConvGrads<T> g{Tensor<T>(is), Tensor<T>(ks), std::vector<T>(co, T(0))};
  // (kh, kw, out, in) copy so the input gradient is a contiguous axpy
  const Tensor<T> wtrans = transpose_kernel(weight);
  const T* wtk = wtrans.data();
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T* go = grad_out.data() + grad_out.offset(n, oy, ox);
        for (std::size_t k = 0; k < co; ++k) g.bias[k] += go[k];
        for (std::size_t ky = 0; ky < ks.n; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(is.h)) continue;
          for (std::size_t kx = 0; kx < ks.h; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(is.w)) continue;
            const std::size_t ioff = input.offset(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            const T* in = input.data() + ioff;
            T* gi = g.input.data() + ioff;
            const std::size_t woff = (ky * ks.h + kx) * ci * co;
            T* gw = g.weight.data() + woff;
            for (std::size_t c = 0; c < ci; ++c) {
              T* gwr = gw + c * co;
              const T v = in[c];
              for (std::size_t k = 0; k < co; ++k) gwr[k] += v * go[k];
            }
            const T* wt = wtk + woff;
            for (std::size_t k = 0; k < co; ++k) {
              const T gk = go[k];
              const T* wr = wt + k * ci;
              for (std::size_t c = 0; c < ci; ++c) gi[c] += gk * wr[c];
            }
          }
        }
      }
    }
  }
  return g;
}

// --- transposed convolution -----------------------------------------------

/// Scatter form of the transposed convolution. Kernel (kh, kw, in, out); output
/// spatial size (in - 1) * stride - 2 pad + k.
template <typename T>
Tensor<T> tconv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, std::span<const T> bias,
                          std::size_t stride, std::size_t pad) {
  detail::check_conv(input, weight, bias.size(), stride);
  const auto& is = input.shape();
  const auto& ks = weight.shape();
  const long oh = static_cast<long>((is.h - 1) * stride + ks.n) - 2 * static_cast<long>(pad);
  const long ow = static_cast<long>((is.w - 1) * stride + ks.h) - 2 * static_cast<long>(pad);
  if (is.h == 0 || is.w == 0 || oh <= 0 || ow <= 0) throw ShapeError("tconv2d: empty output");
  const std::size_t ci = ks.w, co = ks.c;
  Tensor<T> out(Shape{is.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), co});
  if (!bias.empty()) {
    for (std::size_t p = 0; p < out.size() / co; ++p) std::copy(bias.begin(), bias.end(), out.data() + p * co);
  }
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t iy = 0; iy < is.h; ++iy) {
      for (std::size_t ix = 0; ix < is.w; ++ix) {
        const T* in = input.data() + input.offset(n, iy, ix);
        for (std::size_t ky = 0; ky < ks.n; ++ky) {
          const long oy = static_cast<long>(iy * stride + ky) - static_cast<long>(pad);
          if (oy < 0 || oy >= oh) continue;
          for (std::size_t kx = 0; kx < ks.h; ++kx) {
            const long ox = static_cast<long>(ix * stride + kx) - static_cast<long>(pad);
            if (ox < 0 || ox >= ow) continue;
            T* o = out.data() + out.offset(n, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox));
            const T* wk = weight.data() + (ky * ks.h + kx) * ci * co;
            for (std::size_t c = 0; c < ci; ++c) {
              const T v = in[c];
              const T* wr = wk + c * co;
              for (std::size_t k = 0; k < co; ++k) o[k] += v * wr[k];
            }
          }
        }
      }
    }
  }
  return out;
}

/// Gather form of the transposed convolution, one rounding per output.
template <typename T>
Tensor<T> tconv2d_forward_reference(const Tensor<T>& input, const Tensor<T>& weight, std::span<const T> bias,
                                    std::size_t stride, std::size_t pad) {
  detail::check_conv(input, weight, bias.size(), stride);
  const auto& is = input.shape();
  const auto& ks = weight.shape();
  const long oh = static_cast<long>((is.h - 1) * stride + ks.n) - 2 * static_cast<long>(pad);
  const long ow = static_cast<long>((is.w - 1) * stride + ks.h) - 2 * static_cast<long>(pad);
  if (is.h == 0 || is.w == 0 || oh <= 0 || ow <= 0) throw ShapeError("tconv2d: empty output");
  const long st = static_cast<long>(stride), pd = static_cast<long>(pad);
  Tensor<T> out(Shape{is.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), ks.c});
  for (std::size_t n = 0; n < is.n; ++n)
    for (long oy = 0; oy < oh; ++oy)
      for (long ox = 0; ox < ow; ++ox)
        for (std::size_t k = 0; k < ks.c; ++k) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[k]);
          for (std::size_t ky = 0; ky < ks.n; ++ky)
            for (std::size_t kx = 0; kx < ks.h; ++kx) {
              const long ty = oy + pd - static_cast<long>(ky), tx = ox + pd - static_cast<long>(kx);
              if (ty < 0 || tx < 0 || ty % st != 0 || tx % st != 0) continue;
              const long iy = ty / st, ix = tx / st;
              if (iy >= static_cast<long>(is.h) || ix >= static_cast<long>(is.w)) continue;
              for (std::size_t c = 0; c < ks.w; ++c)
                acc += static_cast<double>(input.at(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), c)) *
                       static_cast<double>(weight.at(ky, kx, c, k));
            }
          out.at(n, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox), k) = static_cast<T>(acc);
        }
  return out;
}

template <typename T>
ConvGrads<T> tconv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                              std::size_t stride, std::size_t pad) {
  detail::check_conv(input, weight, 0, stride);
  const auto& is = input.shape();
  const auto& ks = weight.shape();
  const long oh = static_cast<long>((is.h - 1) * stride + ks.n) - 2 * static_cast<long>(pad);
  const long ow = static_cast<long>((is.w - 1) * stride + ks.h) - 2 * static_cast<long>(pad);
  if (grad_out.shape() != Shape{is.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), ks.c}) {
    throw ShapeError("tconv2d_backward: upstream gradient shape");
  }
  const std::size_t ci = ks.w, co = ks.c;
  ConvGrads<T> g{Tensor<T>(is), Tensor<T>(ks), std::vector<T>(co, T(0))};
  // (kh, kw, out, in) copy so the input gradient is a contiguous axpy
  const Tensor<T> wtrans = transpose_kernel(weight);
  const T* wtk = wtrans.data();
  for (std::size_t p = 0; p < grad_out.size() / co; ++p)
    for (std::size_t k = 0; k < co; ++k) g.bias[k] += grad_out[p * co + k];
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t iy = 0; iy < is.h; ++iy) {
      for (std::size_t ix = 0; ix < is.w; ++ix) {
        const std::size_t ioff = input.offset(n, iy, ix);
        const T* in = input.data() + ioff;
        T* gi = g.input.data() + ioff;
        for (std::size_t ky = 0; ky < ks.n; ++ky) {
          const long oy = static_cast<long>(iy * stride + ky) - static_cast<long>(pad);
          if (oy < 0 || oy >= oh) continue;
          for (std::size_t kx = 0; kx < ks.h; ++kx) {
            const long ox = static_cast<long>(ix * stride + kx) - static_cast<long>(pad);
            if (ox < 0 || ox >= ow) continue;
            const T* go = grad_out.data() + grad_out.offset(n, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox));
            const std::size_t woff = (ky * ks.h + kx) * ci * co;
            T* gw = g.weight.data() + woff;
            for (std::size_t c = 0; c < ci; ++c) {
              T* gwr = gw + c * co;
              const T v = in[c];
              for (std::size_t k = 0; k < co; ++k) gwr[k] += v * go[k];
            }
            const T* wt = wtk + woff;
            for (std::size_t k = 0; k < co; ++k) {
              const T gk = go[k];
              const T* wr = wt + k * ci;
              for (std::size_t c = 0; c < ci; ++c) gi[c] += gk * wr[c];
            }
          }
        }
      }
    }
  }
  return g;
}


// --- pointwise activations -------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <typename T>
Tensor<T> leaky_relu_forward(const Tensor<T>& x, T slope) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
  return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out, T slope) {
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : slope * grad_out[i];
  return g;
}

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

/// Uses the forward output y = tanh(x).
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = (T(1) - y[i] * y[i]) * grad_out[i];
  return g;
}

template <typename T>
T sigmoid(T x) {
  // Branches keep exp() from overflowing for large |x|.
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

/// Uses the forward output y = sigmoid(x).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] * (T(1) - y[i]) * grad_out[i];
  return g;
}

// --- structural ops ---------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat of mismatched tensors " + sa.str() + " and " + sb.str());
  }
  Tensor<T> out(Shape{sa.n, sa.h, sa.w, sa.c + sb.c});
  const std::size_t pixels = sa.n * sa.h * sa.w;
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(a.data() + p * sa.c, sa.c, out.data() + p * (sa.c + sb.c));
    std::copy_n(b.data() + p * sb.c, sb.c, out.data() + p * (sa.c + sb.c) + sa.c);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t first_channels) {
  const auto& s = x.shape();
  if (first_channels > s.c) throw ShapeError("split point beyond channel count");
  const std::size_t rest = s.c - first_channels;
  Tensor<T> a(Shape{s.n, s.h, s.w, first_channels});
  Tensor<T> b(Shape{s.n, s.h, s.w, rest});
  const std::size_t pixels = s.n * s.h * s.w;
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(x.data() + p * s.c, first_channels, a.data() + p * first_channels);
    std::copy_n(x.data() + p * s.c + first_channels, rest, b.data() + p * rest);
  }
  return {std::move(a), std::move(b)};
}

/// (N, H, W, C r^2) -> (N, rH, rW, C): channel c r^2 + dy r + dx lands on (r y + dy, r x + dx, c).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
  const auto& s = x.shape();
  if (r == 0 || s.c % (r * r) != 0) throw ShapeError("pixel_shuffle: channels not divisible by r^2");
  const std::size_t c_out = s.c / (r * r);
  Tensor<T> out(Shape{s.n, s.h * r, s.w * r, c_out});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t xx = 0; xx < s.w; ++xx)
        for (std::size_t c = 0; c < c_out; ++c)
          for (std::size_t dy = 0; dy < r; ++dy)
            for (std::size_t dx = 0; dx < r; ++dx)
              out.at(n, r * y + dy, r * xx + dx, c) = x.at(n, y, xx, c * r * r + dy * r + dx);
  return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r) {
  const auto& s = x.shape();
  if (r == 0 || s.h % r != 0 || s.w % r != 0) throw ShapeError("pixel_unshuffle: spatial dims not divisible by r");
  Tensor<T> out(Shape{s.n, s.h / r, s.w / r, s.c * r * r});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h / r; ++y)
      for (std::size_t xx = 0; xx < s.w / r; ++xx)
        for (std::size_t c = 0; c < s.c; ++c)
          for (std::size_t dy = 0; dy < r; ++dy)
            for (std::size_t dx = 0; dx < r; ++dx)
              out.at(n, y, xx, c * r * r + dy * r + dx) = x.at(n, r * y + dy, r * xx + dx, c);
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  const auto& s = x.shape();
  if (s.h * s.w == 0) throw ShapeError("global_avg_pool of an empty map");
  Tensor<T> out(Shape{s.n, 1, 1, s.c});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (std::size_t p = 0; p < s.h * s.w; ++p) acc += x[(n * s.h * s.w + p) * s.c + c];
      out.at(n, 0, 0, c) = static_cast<T>(acc / static_cast<double>(s.h * s.w));
    }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  Tensor<T> g(input_shape);
  const std::size_t hw = input_shape.h * input_shape.w;
  const T inv = T(1) / static_cast<T>(hw);
  for (std::size_t n = 0; n < input_shape.n; ++n)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t c = 0; c < input_shape.c; ++c)
        g[(n * hw + p) * input_shape.c + c] = grad_out.at(n, 0, 0, c) * inv;
  return g;
}

/// Fully connected layer over the flattened per-sample features. Weight shape
/// (1, 1, in_features, out_features); output (N, 1, 1, out).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias) {
  const auto& s = x.shape();
  const std::size_t fin = s.h * s.w * s.c;
  const std::size_t fout = weight.shape().c;
  if (weight.shape().w != fin) throw ShapeError("dense: feature count mismatch");
  if (!bias.empty() && bias.size() != fout) throw ShapeError("dense: bias length mismatch");
  Tensor<T> out(Shape{s.n, 1, 1, fout});
  for (std::size_t n = 0; n < s.n; ++n) {
    std::vector<double> acc(fout, 0.0);
    if (!bias.empty()) std::copy(bias.begin(), bias.end(), acc.begin());
    const T* in = x.data() + n * fin;
    for (std::size_t i = 0; i < fin; ++i)
      for (std::size_t k = 0; k < fout; ++k)
        acc[k] += static_cast<double>(in[i]) * static_cast<double>(weight[i * fout + k]);
    for (std::size_t k = 0; k < fout; ++k) out[n * fout + k] = static_cast<T>(acc[k]);
  }
  return out;
}

template <typename T>
ConvGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  const auto& s = x.shape();
  const std::size_t fin = s.h * s.w * s.c;
  const std::size_t fout = weight.shape().c;
  if (grad_out.shape() != Shape{s.n, 1, 1, fout}) throw ShapeError("dense_backward: upstream gradient shape");
  ConvGrads<T> g{Tensor<T>(s), Tensor<T>(weight.shape()), std::vector<T>(fout, T(0))};
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* go = grad_out.data() + n * fout;
    const T* in = x.data() + n * fin;
    T* gi = g.input.data() + n * fin;
    for (std::size_t k = 0; k < fout; ++k) g.bias[k] += go[k];
    for (std::size_t i = 0; i < fin; ++i) {
      T acc = T(0);
      for (std::size_t k = 0; k < fout; ++k) {
        acc += weight[i * fout + k] * go[k];
        g.weight[i * fout + k] += in[i] * go[k];
      }
      gi[i] = acc;
    }
  }
  return g;
}

// --- losses -----------------------------------------------------------------

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
};

/// Mean absolute error over every element; subgradient sign(p - t) / count with sign(0) = 0.
template <typename T>
LossResult<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) throw ShapeError("mae_loss shape mismatch");
  if (pred.empty()) throw ShapeError("mae_loss of empty tensors");
  LossResult<T> r{0.0, Tensor<T>(pred.shape())};
  const double count = static_cast<double>(pred.size());
  const T inv = static_cast<T>(1.0 / count);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    r.loss += std::abs(d);
    r.grad[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : T(0));
  }
  r.loss /= count;
  return r;
}

}  // namespace hdrsr
