#pragma once

// Literal, slow implementations of the attention blocks and convolution,
// written straight from their definitions with nested loops and no shared
// kernels.  The test suite and the oracle command compare the optimised
// paths against these on small random instances; any disagreement beyond
// rounding noise is a bug in one of the two.

#include <cmath>
#include <cstdlib>
#include <vector>

#include "nlv/conv.hpp"
#include "nlv/mask.hpp"
#include "nlv/nonlocal.hpp"
#include "nlv/relation.hpp"
#include "nlv/tensor.hpp"

namespace nlv::ref {

inline double dot_project(const double* w_row, const double* x, std::size_t c) {
  double acc = 0;
  for (std::size_t i = 0; i < c; ++i) acc += w_row[i] * x[i];
  return acc;
}

// Row-restricted softmax from the definition: keep score (p,q) when q lies
// within the per-axis radii of p, exponentiate around the kept maximum,
// divide by the kept sum.
inline Tensor<double> masked_softmax(const Tensor<double>& scores, const MaskSpec& spec,
                                     GridDims dims) {
  const std::size_t n = dims.positions();
  const std::size_t rt = spec.dt.resolve(dims.t);
  const std::size_t rh = spec.dh.resolve(dims.h);
  const std::size_t rw = spec.dw.resolve(dims.w);
  auto coord = [&](std::size_t p, std::size_t& t, std::size_t& h, std::size_t& w) {
    w = p % dims.w;
    h = (p / dims.w) % dims.h;
    t = p / (dims.w * dims.h);
  };
  auto near = [](std::size_t a, std::size_t b, std::size_t r) {
    return (a > b ? a - b : b - a) <= r;
  };
  Tensor<double> out(Shape{n, n});
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t pt, ph, pw;
    coord(p, pt, ph, pw);
    std::vector<std::size_t> kept;
    for (std::size_t q = 0; q < n; ++q) {
      std::size_t qt, qh, qw;
      coord(q, qt, qh, qw);
      if (near(pt, qt, rt) && near(ph, qh, rh) && near(pw, qw, rw)) kept.push_back(q);
    }
    double mx = scores.at(p, kept[0]);
    for (std::size_t q : kept) mx = std::max(mx, scores.at(p, q));
    double sum = 0;
    for (std::size_t q : kept) sum += std::exp(scores.at(p, q) - mx);
    for (std::size_t q : kept) out.at(p, q) = std::exp(scores.at(p, q) - mx) / sum;
  }
  return out;
}

inline FeatureMap<double> nonlocal(const FeatureMap<double>& x,
                                   const ProjectionParams<double>& params, const MaskSpec& spec) {
  const std::size_t n = x.positions();
  const std::size_t c = x.channels();
  const std::size_t cp = params.bottleneck();

  std::vector<std::vector<double>> theta(n), phi(n), g(n);
  for (std::size_t p = 0; p < n; ++p) {
    theta[p].resize(cp);
    phi[p].resize(cp);
    g[p].resize(cp);
    for (std::size_t l = 0; l < cp; ++l) {
      theta[p][l] = dot_project(params.w_theta.data() + l * c, x.vec(p), c);
      phi[p][l] = dot_project(params.w_phi.data() + l * c, x.vec(p), c);
      g[p][l] = dot_project(params.w_g.data() + l * c, x.vec(p), c);
    }
  }

  Tensor<double> scores(Shape{n, n});
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) {
      double acc = 0;
      for (std::size_t l = 0; l < cp; ++l) acc += theta[p][l] * phi[q][l];
      scores.at(p, q) = acc;
    }

  const GridDims dims{x.time(), x.height(), x.width()};
  const Tensor<double> attn = masked_softmax(scores, spec, dims);

  FeatureMap<double> out(x.time(), x.height(), x.width(), c);
  std::vector<double> y(cp);
  for (std::size_t p = 0; p < n; ++p) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t l = 0; l < cp; ++l) y[l] += attn.at(p, q) * g[q][l];
    for (std::size_t o = 0; o < c; ++o)
      out.vec(p)[o] = dot_project(params.w_z.data() + o * cp, y.data(), cp) + x.vec(p)[o];
  }
  return out;
}

inline FeatureMap<double> relation(const FeatureMap<double>& x,
                                   const RelationNetParams<double>& params) {
  const long T = static_cast<long>(x.time());
  const long H = static_cast<long>(x.height());
  const long W = static_cast<long>(x.width());
  const std::size_t c = x.channels();
  const std::size_t cp = params.bottleneck();
  const std::size_t patch = params.patch_size();
  const std::size_t kk = params.kernel_size();
  const std::size_t c_mid = params.layer1.extent(0);

  std::vector<std::vector<double>> g(x.positions(), std::vector<double>(cp));
  for (std::size_t p = 0; p < x.positions(); ++p)
    for (std::size_t l = 0; l < cp; ++l)
      g[p][l] = dot_project(params.w_g.data() + l * c, x.vec(p), c);

  FeatureMap<double> out(x.time(), x.height(), x.width(), c);
  std::vector<double> u(c * patch), mid(c_mid), logits(kk), r(kk), y(cp);
  for (long t = 0; t < T; ++t)
    for (long h = 0; h < H; ++h)
      for (long w = 0; w < W; ++w) {
        // Receptive patch, zero outside the clip, channels fastest.
        std::size_t idx = 0;
        for (long dt = -params.t0; dt <= params.t0; ++dt)
          for (long dh = -params.h0; dh <= params.h0; ++dh)
            for (long dw = -params.w0; dw <= params.w0; ++dw) {
              const long tt = t + dt, hh = h + dh, www = w + dw;
              const bool in = tt >= 0 && tt < T && hh >= 0 && hh < H && www >= 0 && www < W;
              for (std::size_t ch = 0; ch < c; ++ch)
                u[idx++] = in ? x.vec(x.position(tt, hh, www))[ch] : 0.0;
            }

        for (std::size_t mIdx = 0; mIdx < c_mid; ++mIdx) {
          double acc = 0;
          for (std::size_t j = 0; j < u.size(); ++j) acc += params.layer1.at(mIdx, j) * u[j];
          mid[mIdx] = acc > 0 ? acc : 0;
        }
        for (std::size_t kIdx = 0; kIdx < kk; ++kIdx) {
          double acc = 0;
          for (std::size_t mIdx = 0; mIdx < c_mid; ++mIdx)
            acc += params.layer2.at(kIdx, mIdx) * mid[mIdx];
          logits[kIdx] = acc;
        }
        if (params.normalize_relations) {
          double mx = logits[0];
          for (double v : logits) mx = std::max(mx, v);
          double sum = 0;
          for (std::size_t kIdx = 0; kIdx < kk; ++kIdx) sum += std::exp(logits[kIdx] - mx);
          for (std::size_t kIdx = 0; kIdx < kk; ++kIdx) r[kIdx] = std::exp(logits[kIdx] - mx) / sum;
        } else {
          r = logits;
        }

        std::fill(y.begin(), y.end(), 0.0);
        std::size_t kIdx = 0;
        for (long dt = -params.t1; dt <= params.t1; ++dt)
          for (long dh = -params.h1; dh <= params.h1; ++dh)
            for (long dw = -params.w1; dw <= params.w1; ++dw, ++kIdx) {
              const long tt = t + dt, hh = h + dh, www = w + dw;
              if (tt < 0 || tt >= T || hh < 0 || hh >= H || www < 0 || www >= W) continue;
              const std::vector<double>& gq = g[x.position(tt, hh, www)];
              for (std::size_t l = 0; l < cp; ++l) y[l] += r[kIdx] * gq[l];
            }

        const std::size_t p = x.position(t, h, w);
        for (std::size_t o = 0; o < c; ++o)
          out.vec(p)[o] = dot_project(params.w_z.data() + o * cp, y.data(), cp) + x.vec(p)[o];
      }
  return out;
}

inline Tensor<double> conv3d(const Tensor<double>& x, const Kernel3D<double>& kernel,
                             ConvPad pad) {
  const long cin = static_cast<long>(x.extent(0));
  const long T = static_cast<long>(x.extent(1));
  const long H = static_cast<long>(x.extent(2));
  const long W = static_cast<long>(x.extent(3));
  const long cout = static_cast<long>(kernel.weights.extent(0));
  const long kt = static_cast<long>(kernel.weights.extent(2));
  const long kh = static_cast<long>(kernel.weights.extent(3));
  const long kw = static_cast<long>(kernel.weights.extent(4));
  const long to = T + 2 * pad.t - kt + 1;
  const long ho = H + 2 * pad.h - kh + 1;
  const long wo = W + 2 * pad.w - kw + 1;

  Tensor<double> out(Shape{static_cast<std::size_t>(cout), static_cast<std::size_t>(to),
                           static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  for (long o = 0; o < cout; ++o)
    for (long t = 0; t < to; ++t)
      for (long h = 0; h < ho; ++h)
        for (long w = 0; w < wo; ++w) {
          double acc = 0;
          for (long ci = 0; ci < cin; ++ci)
            for (long a = 0; a < kt; ++a)
              for (long b = 0; b < kh; ++b)
                for (long d = 0; d < kw; ++d) {
                  const long ts = t + a - pad.t, hs = h + b - pad.h, ws = w + d - pad.w;
                  if (ts < 0 || ts >= T || hs < 0 || hs >= H || ws < 0 || ws >= W) continue;
                  acc += x.at(ci, ts, hs, ws) * kernel.weights.at(o, ci, a, b, d);
                }
          out.at(o, t, h, w) = acc;
        }
  return out;
}

}  // namespace nlv::ref
