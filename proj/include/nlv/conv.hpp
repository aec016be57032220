#pragma once

// Minimal 3D convolution (cross-correlation, stride 1, zero padding) over
// channels-first video tensors (C, T, H, W), plus the 2D -> 3D kernel
// inflation used to bootstrap video models from image weights: the 2D
// kernel is copied across the temporal extent and scaled by 1/t, so a
// temporally constant input yields the 2D response away from the clip
// boundary.

#include <cstdint>
#include <random>

#include "nlv/tensor.hpp"
#include "nlv/tensor_ops.hpp"

namespace nlv {

template <typename S>
struct Kernel2D {
  Tensor<S> weights;  // (C_out, C_in, k_h, k_w)

  Kernel2D() = default;
  explicit Kernel2D(Tensor<S> w) : weights(std::move(w)) {
    if (weights.rank() != 4)
      throw std::invalid_argument("2d kernel must have shape (C_out, C_in, k_h, k_w)");
  }

  static Kernel2D random_init(std::size_t c_out, std::size_t c_in, std::size_t k,
                              std::uint64_t seed) {
    Kernel2D kk(Tensor<S>(Shape{c_out, c_in, k, k}));
    std::mt19937_64 rng(seed);
    fill_glorot(kk.weights, c_in * k * k, c_out * k * k, rng);
    return kk;
  }
};

template <typename S>
struct Kernel3D {
  Tensor<S> weights;  // (C_out, C_in, k_t, k_h, k_w)

  Kernel3D() = default;
  explicit Kernel3D(Tensor<S> w) : weights(std::move(w)) {
    if (weights.rank() != 5)
      throw std::invalid_argument("3d kernel must have shape (C_out, C_in, k_t, k_h, k_w)");
  }
};

template <typename S>
Kernel3D<S> inflate_kernel(const Kernel2D<S>& k2, std::size_t k_t) {
  if (k_t == 0) throw std::invalid_argument("inflate_kernel: temporal extent must be positive");
  const auto& w2 = k2.weights;
  Kernel3D<S> k3(Tensor<S>(
      Shape{w2.extent(0), w2.extent(1), k_t, w2.extent(2), w2.extent(3)}));
  const S scale = S(1) / static_cast<S>(k_t);
  const std::size_t plane = w2.extent(2) * w2.extent(3);
  for (std::size_t o = 0; o < w2.extent(0); ++o)
    for (std::size_t ci = 0; ci < w2.extent(1); ++ci) {
      const S* src = w2.data() + (o * w2.extent(1) + ci) * plane;
      for (std::size_t a = 0; a < k_t; ++a) {
        S* dst = k3.weights.data() + ((o * w2.extent(1) + ci) * k_t + a) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale;
      }
    }
  return k3;
}

struct ConvPad {
  long t = 0, h = 0, w = 0;
};

// Padding that preserves extents for odd kernels; even kernels have no
// centred choice and are rejected.
template <typename S>
ConvPad same_padding(const Kernel3D<S>& kernel) {
  const auto& kw = kernel.weights;
  if (kw.extent(2) % 2 == 0 || kw.extent(3) % 2 == 0 || kw.extent(4) % 2 == 0)
    throw std::invalid_argument("same padding undefined for even kernel extents");
  return ConvPad{static_cast<long>(kw.extent(2) / 2), static_cast<long>(kw.extent(3) / 2),
                 static_cast<long>(kw.extent(4) / 2)};
}

namespace detail {

struct ConvDims {
  long cin, T, H, W, cout, kt, kh, kw, to, ho, wo;
};

template <typename S>
ConvDims conv_dims(const Tensor<S>& x, const Kernel3D<S>& kernel, ConvPad pad) {
  if (x.rank() != 4) throw std::invalid_argument("conv3d: input must be (C, T, H, W)");
  if (pad.t < 0 || pad.h < 0 || pad.w < 0)
    throw std::invalid_argument("conv3d: padding must be non-negative");
  ConvDims d;
  d.cin = static_cast<long>(x.extent(0));
  d.T = static_cast<long>(x.extent(1));
  d.H = static_cast<long>(x.extent(2));
  d.W = static_cast<long>(x.extent(3));
  d.cout = static_cast<long>(kernel.weights.extent(0));
  d.kt = static_cast<long>(kernel.weights.extent(2));
  d.kh = static_cast<long>(kernel.weights.extent(3));
  d.kw = static_cast<long>(kernel.weights.extent(4));
  if (static_cast<long>(kernel.weights.extent(1)) != d.cin)
    throw std::invalid_argument("conv3d: kernel input channels disagree with input");
  d.to = d.T + 2 * pad.t - d.kt + 1;
  d.ho = d.H + 2 * pad.h - d.kh + 1;
  d.wo = d.W + 2 * pad.w - d.kw + 1;
  if (d.to <= 0 || d.ho <= 0 || d.wo <= 0)
    throw std::invalid_argument("conv3d: kernel does not fit the padded input");
  return d;
}

}  // namespace detail

template <typename S>
Tensor<S> conv3d(const Tensor<S>& x, const Kernel3D<S>& kernel, ConvPad pad) {
  const auto d = detail::conv_dims(x, kernel, pad);
  Tensor<S> out(Shape{static_cast<std::size_t>(d.cout), static_cast<std::size_t>(d.to),
                      static_cast<std::size_t>(d.ho), static_cast<std::size_t>(d.wo)});
  for (long o = 0; o < d.cout; ++o)
    for (long ci = 0; ci < d.cin; ++ci)
      for (long a = 0; a < d.kt; ++a)
        for (long b = 0; b < d.kh; ++b)
          for (long e = 0; e < d.kw; ++e) {
            const S kv = kernel.weights.at(o, ci, a, b, e);
            if (kv == S(0)) continue;
            // Slide this one kernel tap over the valid output range.
            for (long t = std::max(0l, pad.t - a); t < std::min(d.to, d.T + pad.t - a); ++t)
              for (long h = std::max(0l, pad.h - b); h < std::min(d.ho, d.H + pad.h - b); ++h) {
                const long ws = std::max(0l, pad.w - e);
                const long we = std::min(d.wo, d.W + pad.w - e);
                const S* xrow = x.data() +
                                ((ci * d.T + (t + a - pad.t)) * d.H + (h + b - pad.h)) * d.W -
                                pad.w + e;
                S* orow = out.data() + ((o * d.to + t) * d.ho + h) * d.wo;
                for (long w = ws; w < we; ++w) orow[w] += kv * xrow[w];
              }
          }
  return out;
}

template <typename S>
struct Conv3DGradients {
  Tensor<S> x_grad;
  Tensor<S> kernel_grad;
};

template <typename S>
Conv3DGradients<S> conv3d_backward(const Tensor<S>& x, const Kernel3D<S>& kernel, ConvPad pad,
                                   const Tensor<S>& out_grad) {
  const auto d = detail::conv_dims(x, kernel, pad);
  if (out_grad.rank() != 4 || static_cast<long>(out_grad.extent(0)) != d.cout ||
      static_cast<long>(out_grad.extent(1)) != d.to ||
      static_cast<long>(out_grad.extent(2)) != d.ho ||
      static_cast<long>(out_grad.extent(3)) != d.wo)
    throw std::invalid_argument("conv3d_backward: gradient shape mismatch");

  Conv3DGradients<S> grads;
  grads.x_grad = Tensor<S>(x.shape());
  grads.kernel_grad = Tensor<S>(kernel.weights.shape());
  for (long o = 0; o < d.cout; ++o)
    for (long t = 0; t < d.to; ++t)
      for (long h = 0; h < d.ho; ++h)
        for (long w = 0; w < d.wo; ++w) {
          const S go = out_grad.at(o, t, h, w);
          if (go == S(0)) continue;
          for (long ci = 0; ci < d.cin; ++ci)
            for (long a = 0; a < d.kt; ++a) {
              const long ts = t + a - pad.t;
              if (ts < 0 || ts >= d.T) continue;
              for (long b = 0; b < d.kh; ++b) {
                const long hs = h + b - pad.h;
                if (hs < 0 || hs >= d.H) continue;
                for (long e = 0; e < d.kw; ++e) {
                  const long ws = w + e - pad.w;
                  if (ws < 0 || ws >= d.W) continue;
                  grads.x_grad.at(ci, ts, hs, ws) += go * kernel.weights.at(o, ci, a, b, e);
                  grads.kernel_grad.at(o, ci, a, b, e) += go * x.at(ci, ts, hs, ws);
                }
              }
            }
        }
  return grads;
}

}  // namespace nlv
