#pragma once

// Self-attention over every spatio-temporal position of a video feature
// map.  Each position i emits a query theta(x_i) and is scored against all
// keys phi(x_j); the softmax of those scores mixes the value vectors
// g(x_j), and a final projection w_z maps the mixture back to the input
// width so the block computes z = w_z * y + x.  With w_z zero the block is
// the identity, which is how it is inserted into a pretrained backbone
// without disturbing it.
//
// A mask limits each row's support to a neighbourhood box (see mask.hpp).
// The softmax is renormalised over the surviving entries, so masked rows
// stay stochastic and masked entries are exactly zero.
//
// Backward passes are closed-form.  The forward keeps its intermediates in
// a cache that the backward consumes exactly once.

#include <vector>

#include "nlv/mask.hpp"
#include "nlv/tensor.hpp"
#include "nlv/tensor_ops.hpp"

namespace nlv {

inline std::size_t default_bottleneck(std::size_t channels) {
  return channels / 2 > 0 ? channels / 2 : 1;
}

template <typename S>
struct ProjectionParams {
  Tensor<S> w_theta;  // (Cp, C) query projection
  Tensor<S> w_phi;    // (Cp, C) key projection
  Tensor<S> w_g;      // (Cp, C) value projection
  Tensor<S> w_z;      // (C, Cp) output projection

  std::size_t channels() const { return w_theta.extent(1); }
  std::size_t bottleneck() const { return w_theta.extent(0); }

  void validate() const {
    const std::size_t c = channels(), cp = bottleneck();
    auto check = [&](const Tensor<S>& w, std::size_t r0, std::size_t r1, const char* name) {
      if (w.rank() != 2 || w.extent(0) != r0 || w.extent(1) != r1)
        throw std::invalid_argument(std::string("projection weights disagree: ") + name);
    };
    check(w_theta, cp, c, "w_theta");
    check(w_phi, cp, c, "w_phi");
    check(w_g, cp, c, "w_g");
    check(w_z, c, cp, "w_z");
  }

  static ProjectionParams zeros(std::size_t c, std::size_t cp) {
    ProjectionParams p;
    p.w_theta = Tensor<S>(Shape{cp, c});
    p.w_phi = Tensor<S>(Shape{cp, c});
    p.w_g = Tensor<S>(Shape{cp, c});
    p.w_z = Tensor<S>(Shape{c, cp});
    return p;
  }

  // Random projections, zero w_z: the freshly inserted block starts out as
  // the identity map.
  static ProjectionParams random_init(std::size_t c, std::size_t cp, std::uint64_t seed) {
    ProjectionParams p = zeros(c, cp);
    std::mt19937_64 rng(seed);
    fill_glorot(p.w_theta, c, cp, rng);
    fill_glorot(p.w_phi, c, cp, rng);
    fill_glorot(p.w_g, c, cp, rng);
    return p;
  }
};

// Raw attention logits: scores[p][q] = <theta_p, phi_q>.
template <typename S>
Tensor<S> pairwise_scores(const FeatureMap<S>& theta, const FeatureMap<S>& phi) {
  if (!theta.same_shape(phi))
    throw std::invalid_argument("pairwise_scores: query/key maps disagree");
  return matmul_nt(as_matrix(theta), as_matrix(phi));
}

// Row-wise softmax restricted to each position's neighbourhood box.  Row
// statistics (max, normaliser) are taken over the box only, masked entries
// come out exactly zero, and with an all-infinite mask the arithmetic is
// identical to softmax_rows.
template <typename S>
Tensor<S> masked_softmax(const Tensor<S>& scores, const MaskSpec& spec, GridDims dims) {
  const std::size_t n = dims.positions();
  if (scores.rank() != 2 || scores.extent(0) != n || scores.extent(1) != n)
    throw std::invalid_argument("masked_softmax: score matrix does not match grid");
  const ResolvedMask m = resolve_mask(spec, dims);
  Tensor<S> out(Shape{n, n});
  std::vector<std::size_t> support;
  support.reserve(n);
  for (std::size_t t = 0; t < dims.t; ++t) {
    const AxisWindow wt = axis_window(t, m.rt, dims.t);
    for (std::size_t h = 0; h < dims.h; ++h) {
      const AxisWindow wh = axis_window(h, m.rh, dims.h);
      for (std::size_t w = 0; w < dims.w; ++w) {
        const AxisWindow ww = axis_window(w, m.rw, dims.w);
        const std::size_t p = (t * dims.h + h) * dims.w + w;
        const S* row = scores.data() + p * n;
        S* orow = out.data() + p * n;

        support.clear();
        for (std::size_t tt = wt.lo; tt <= wt.hi; ++tt)
          for (std::size_t hh = wh.lo; hh <= wh.hi; ++hh)
            for (std::size_t ws = ww.lo; ws <= ww.hi; ++ws)
              support.push_back((tt * dims.h + hh) * dims.w + ws);

        S mx = row[support[0]];
        for (std::size_t q : support) mx = std::max(mx, row[q]);
        S sum = 0;
        for (std::size_t q : support) {
          orow[q] = std::exp(row[q] - mx);
          sum += orow[q];
        }
        for (std::size_t q : support) orow[q] /= sum;
      }
    }
  }
  return out;
}

template <typename S>
struct NonlocalCache {
  FeatureMap<S> input;
  ProjectionParams<S> params;
  MaskSpec mask;
  GridDims dims;
  Tensor<S> theta, phi, g;  // (N, Cp)
  Tensor<S> attn;           // (N, N), row-stochastic
  Tensor<S> mixed;          // y = attn * g, (N, Cp)
  bool consumed = false;
};

template <typename S>
struct AttentionOutput {
  FeatureMap<S> z;
  NonlocalCache<S> cache;

  const Tensor<S>& attn() const { return cache.attn; }
};

template <typename S>
struct NonlocalGradients {
  FeatureMap<S> x_grad;
  ProjectionParams<S> params;
};

template <typename S>
AttentionOutput<S> nonlocal_forward(const FeatureMap<S>& x, const ProjectionParams<S>& params,
                                    const MaskSpec& mask = MaskSpec::all_infinite()) {
  params.validate();
  if (params.channels() != x.channels())
    throw std::invalid_argument("nonlocal_forward: channel count mismatch");
  const GridDims dims{x.time(), x.height(), x.width()};

  AttentionOutput<S> out;
  NonlocalCache<S>& cc = out.cache;
  cc.input = x;
  cc.params = params;
  cc.mask = mask;
  cc.dims = dims;

  const Tensor<S> xm = as_matrix(x);
  cc.theta = matmul_nt(xm, params.w_theta);
  cc.phi = matmul_nt(xm, params.w_phi);
  cc.g = matmul_nt(xm, params.w_g);

  Tensor<S> scores = matmul_nt(cc.theta, cc.phi);
  cc.attn = masked_softmax(scores, mask, dims);
  cc.mixed = matmul(cc.attn, cc.g);

  Tensor<S> z = matmul_nt(cc.mixed, params.w_z);
  add_inplace(z, xm);
  out.z = as_feature_map(z, dims.t, dims.h, dims.w);
  return out;
}

template <typename S>
NonlocalGradients<S> nonlocal_backward(const FeatureMap<S>& out_grad, NonlocalCache<S>& cache) {
  if (cache.consumed) throw std::logic_error("nonlocal_backward: cache already consumed");
  if (!out_grad.same_shape(cache.input))
    throw std::invalid_argument("nonlocal_backward: gradient shape does not match cached input");
  cache.consumed = true;

  const ProjectionParams<S>& pp = cache.params;
  const Tensor<S> xm = as_matrix(cache.input);
  const Tensor<S> gz = as_matrix(out_grad);  // (N, C)
  const std::size_t n = cache.dims.positions();

  NonlocalGradients<S> grads;
  grads.params = ProjectionParams<S>::zeros(pp.channels(), pp.bottleneck());

  // Residual and output projection.
  Tensor<S> dx = gz;
  grads.params.w_z = matmul_tn(gz, cache.mixed);      // (C, Cp)
  const Tensor<S> dy = matmul(gz, pp.w_z);            // (N, Cp)

  // Through the attention mix y = A g.
  const Tensor<S> dattn = matmul_nt(dy, cache.g);     // (N, N)
  Tensor<S> dg = matmul_tn(cache.attn, dy);           // (N, Cp)

  // Softmax rows: masked entries have attn == 0 and contribute nothing.
  Tensor<S> dscores(Shape{n, n});
  for (std::size_t p = 0; p < n; ++p) {
    const S* a = cache.attn.data() + p * n;
    const S* d = dattn.data() + p * n;
    S dot = 0;
    for (std::size_t q = 0; q < n; ++q) dot += a[q] * d[q];
    S* ds = dscores.data() + p * n;
    for (std::size_t q = 0; q < n; ++q) ds[q] = a[q] * (d[q] - dot);
  }

  // Scores s_pq = <theta_p, phi_q>.
  const Tensor<S> dtheta = matmul(dscores, cache.phi);     // (N, Cp)
  const Tensor<S> dphi = matmul_tn(dscores, cache.theta);  // (N, Cp)

  grads.params.w_theta = matmul_tn(dtheta, xm);  // (Cp, C)
  grads.params.w_phi = matmul_tn(dphi, xm);
  grads.params.w_g = matmul_tn(dg, xm);

  add_inplace(dx, matmul(dtheta, pp.w_theta));
  add_inplace(dx, matmul(dphi, pp.w_phi));
  add_inplace(dx, matmul(dg, pp.w_g));

  grads.x_grad = as_feature_map(dx, cache.dims.t, cache.dims.h, cache.dims.w);
  return grads;
}

// Forward pass without the (N, N) attention matrix: each row's scores are
// produced, normalised and folded into the output one neighbourhood at a
// time.  Output matches nonlocal_forward; memory stays O(N * Cp).  This is
// the path for clip-sized inputs where N^2 storage is the bottleneck.
template <typename S>
FeatureMap<S> nonlocal_apply(const FeatureMap<S>& x, const ProjectionParams<S>& params,
                             const MaskSpec& mask = MaskSpec::all_infinite()) {
  params.validate();
  if (params.channels() != x.channels())
    throw std::invalid_argument("nonlocal_apply: channel count mismatch");
  const GridDims dims{x.time(), x.height(), x.width()};
  const ResolvedMask m = resolve_mask(mask, dims);
  const std::size_t cp = params.bottleneck(), c = params.channels();

  const Tensor<S> xm = as_matrix(x);
  const Tensor<S> theta = matmul_nt(xm, params.w_theta);
  const Tensor<S> phi = matmul_nt(xm, params.w_phi);
  const Tensor<S> g = matmul_nt(xm, params.w_g);

  FeatureMap<S> out(dims.t, dims.h, dims.w, c);
  std::vector<std::size_t> support;
  std::vector<S> scores;
  std::vector<S> y(cp);
  for (std::size_t t = 0; t < dims.t; ++t) {
    const AxisWindow wt = axis_window(t, m.rt, dims.t);
    for (std::size_t h = 0; h < dims.h; ++h) {
      const AxisWindow wh = axis_window(h, m.rh, dims.h);
      for (std::size_t w = 0; w < dims.w; ++w) {
        const AxisWindow ww = axis_window(w, m.rw, dims.w);
        const std::size_t p = (t * dims.h + h) * dims.w + w;
        const S* th = theta.data() + p * cp;

        support.clear();
        scores.clear();
        for (std::size_t tt = wt.lo; tt <= wt.hi; ++tt)
          for (std::size_t hh = wh.lo; hh <= wh.hi; ++hh)
            for (std::size_t ws = ww.lo; ws <= ww.hi; ++ws) {
              const std::size_t q = (tt * dims.h + hh) * dims.w + ws;
              const S* ph = phi.data() + q * cp;
              S acc = 0;
              for (std::size_t l = 0; l < cp; ++l) acc += th[l] * ph[l];
              support.push_back(q);
              scores.push_back(acc);
            }

        S mx = scores[0];
        for (S s : scores) mx = std::max(mx, s);
        S sum = 0;
        for (S& s : scores) {
          s = std::exp(s - mx);
          sum += s;
        }
        std::fill(y.begin(), y.end(), S(0));
        for (std::size_t i = 0; i < support.size(); ++i) {
          const S a = scores[i] / sum;
          const S* gv = g.data() + support[i] * cp;
          for (std::size_t l = 0; l < cp; ++l) y[l] += a * gv[l];
        }

        const S* xin = x.vec(p);
        S* zo = out.vec(p);
        for (std::size_t o = 0; o < c; ++o) {
          const S* wrow = params.w_z.data() + o * cp;
          S acc = 0;
          for (std::size_t l = 0; l < cp; ++l) acc += wrow[l] * y[l];
          zo[o] = acc + xin[o];
        }
      }
    }
  }
  return out;
}

struct FlopCount {
  unsigned long long dense = 0;   // unrestricted pairwise terms plus projections
  unsigned long long masked = 0;  // neighbourhood pairwise terms plus projections
  double pairwise_ratio = 1.0;    // masked / dense, pairwise terms only
};

// Multiply-add counts for one application of the block (2 flops per MAC).
// Scoring and mixing each touch Cp channels per (row, support) pair; the
// four 1x1x1 projections cost 2*N*C*Cp apiece.
inline FlopCount attention_flops(GridDims dims, std::size_t c, std::size_t cp,
                                 const MaskSpec& mask) {
  const unsigned long long n = dims.positions();
  const unsigned long long pairs_dense = n * n;
  const unsigned long long pairs_masked = neighbourhood_total(resolve_mask(mask, dims));
  const unsigned long long proj = 8ull * n * c * cp;
  FlopCount f;
  f.dense = 4ull * pairs_dense * cp + proj;
  f.masked = 4ull * pairs_masked * cp + proj;
  f.pairwise_ratio = static_cast<double>(pairs_masked) / static_cast<double>(pairs_dense);
  return f;
}

}  // namespace nlv
