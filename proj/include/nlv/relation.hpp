#pragma once

// Relation block: a learned generalisation of windowed attention.  For
// every position i a small network-in-network reads the receptive patch of
// radius (t0, h0, w0) around i and emits one weight per cell of the output
// window of radius (t1, h1, w1); those weights mix the value vectors g(x)
// of the window, and the block finishes with the usual residual
// z = w_z * y + x.
//
// Layout contracts, shared with the reference implementation:
//   - patches are gathered offset-major, (dt, dh, dw) lexicographic with
//     channels fastest; positions outside the clip contribute zeros
//   - relation entries follow the same lexicographic order over the output
//     window; when normalize_relations is set they are softmaxed over all
//     K entries, and entries whose target falls outside the clip are
//     simply dropped during aggregation
//
// Radii must satisfy r1 < r0 and 2*r0 < extent per axis, so the receptive
// patch strictly contains the output window and never wraps the clip.

#include <array>
#include <vector>

#include "nlv/mask.hpp"
#include "nlv/tensor.hpp"
#include "nlv/tensor_ops.hpp"

namespace nlv {

template <typename S>
struct RelationNetParams {
  long t0 = 1, h0 = 1, w0 = 1;  // receptive radii
  long t1 = 0, h1 = 0, w1 = 0;  // output window radii
  Tensor<S> layer1;             // (C_mid, C * patch_size)
  Tensor<S> layer2;             // (K, C_mid)
  Tensor<S> w_g;                // (Cp, C)
  Tensor<S> w_z;                // (C, Cp)
  bool normalize_relations = true;

  std::size_t patch_size() const {
    return static_cast<std::size_t>((2 * t0 + 1) * (2 * h0 + 1) * (2 * w0 + 1));
  }
  std::size_t kernel_size() const {
    return static_cast<std::size_t>((2 * t1 + 1) * (2 * h1 + 1) * (2 * w1 + 1));
  }
  std::size_t channels() const { return w_g.extent(1); }
  std::size_t bottleneck() const { return w_g.extent(0); }

  void validate() const {
    if (t0 < 0 || h0 < 0 || w0 < 0 || t1 < 0 || h1 < 0 || w1 < 0)
      throw std::invalid_argument("relation radii must be non-negative");
    const std::size_t c = channels(), cp = bottleneck();
    if (layer1.rank() != 2 || layer1.extent(1) != c * patch_size())
      throw std::invalid_argument("relation layer1 width must be channels * patch size");
    if (layer2.rank() != 2 || layer2.extent(0) != kernel_size() ||
        layer2.extent(1) != layer1.extent(0))
      throw std::invalid_argument("relation layer2 shape disagrees with layer1");
    if (w_z.rank() != 2 || w_z.extent(0) != c || w_z.extent(1) != cp)
      throw std::invalid_argument("relation w_z shape disagrees with w_g");
  }

  static RelationNetParams zeros(std::size_t c, std::size_t cp, long t0, long h0, long w0,
                                 long t1, long h1, long w1, std::size_t c_mid = 0) {
    RelationNetParams p;
    p.t0 = t0;
    p.h0 = h0;
    p.w0 = w0;
    p.t1 = t1;
    p.h1 = h1;
    p.w1 = w1;
    if (c_mid == 0) c_mid = 2 * p.kernel_size();
    p.layer1 = Tensor<S>(Shape{c_mid, c * p.patch_size()});
    p.layer2 = Tensor<S>(Shape{p.kernel_size(), c_mid});
    p.w_g = Tensor<S>(Shape{cp, c});
    p.w_z = Tensor<S>(Shape{c, cp});
    return p;
  }

  // Random layer1 and value projection; layer2 and w_z start at zero, so
  // the relation vectors start uniform and the block starts as identity.
  static RelationNetParams random_init(std::size_t c, std::size_t cp, long t0, long h0, long w0,
                                       long t1, long h1, long w1, std::uint64_t seed,
                                       std::size_t c_mid = 0) {
    RelationNetParams p = zeros(c, cp, t0, h0, w0, t1, h1, w1, c_mid);
    std::mt19937_64 rng(seed);
    fill_glorot(p.layer1, p.layer1.extent(1), p.layer1.extent(0), rng);
    fill_glorot(p.w_g, c, cp, rng);
    return p;
  }
};

// Radii are only meaningful against a concrete grid; forward passes check
// them there, not at construction.
template <typename S>
void validate_relation_radii(const RelationNetParams<S>& params, GridDims dims) {
  auto check_axis = [](long r0, long r1, std::size_t extent, const char* axis) {
    if (r1 >= r0)
      throw std::invalid_argument(std::string("relation output radius must be smaller than "
                                              "receptive radius on axis ") +
                                  axis);
    if (2 * r0 >= static_cast<long>(extent))
      throw std::invalid_argument(std::string("relation receptive diameter exceeds clip "
                                              "extent on axis ") +
                                  axis);
  };
  check_axis(params.t0, params.t1, dims.t, "t");
  check_axis(params.h0, params.h1, dims.h, "h");
  check_axis(params.w0, params.w1, dims.w, "w");
}

inline std::vector<std::array<long, 3>> box_offsets(long rt, long rh, long rw) {
  std::vector<std::array<long, 3>> offs;
  offs.reserve(static_cast<std::size_t>((2 * rt + 1) * (2 * rh + 1) * (2 * rw + 1)));
  for (long dt = -rt; dt <= rt; ++dt)
    for (long dh = -rh; dh <= rh; ++dh)
      for (long dw = -rw; dw <= rw; ++dw) offs.push_back({dt, dh, dw});
  return offs;
}

// Per-position relation vectors, shape (T, H, W, K).
template <typename S>
struct RelationField {
  Tensor<S> values;

  std::size_t kernel_size() const { return values.extent(3); }
};

namespace detail {

// Gather all receptive patches into an (N, C * patch) matrix.
template <typename S>
Tensor<S> gather_patches(const FeatureMap<S>& x, long t0, long h0, long w0) {
  const long T = static_cast<long>(x.time());
  const long H = static_cast<long>(x.height());
  const long W = static_cast<long>(x.width());
  const std::size_t c = x.channels();
  const auto offs = box_offsets(t0, h0, w0);
  Tensor<S> u(Shape{x.positions(), c * offs.size()});
  for (long t = 0; t < T; ++t)
    for (long h = 0; h < H; ++h)
      for (long w = 0; w < W; ++w) {
        S* urow = u.data() + x.position(t, h, w) * u.extent(1);
        std::size_t idx = 0;
        for (const auto& o : offs) {
          const long tt = t + o[0], hh = h + o[1], ww = w + o[2];
          if (tt >= 0 && tt < T && hh >= 0 && hh < H && ww >= 0 && ww < W) {
            const S* src = x.vec(x.position(tt, hh, ww));
            for (std::size_t ch = 0; ch < c; ++ch) urow[idx++] = src[ch];
          } else {
            for (std::size_t ch = 0; ch < c; ++ch) urow[idx++] = S(0);
          }
        }
      }
  return u;
}

// Scatter-add of patch gradients back onto the input map; the transpose of
// gather_patches.
template <typename S>
void scatter_patches(const Tensor<S>& du, long t0, long h0, long w0, FeatureMap<S>& dx) {
  const long T = static_cast<long>(dx.time());
  const long H = static_cast<long>(dx.height());
  const long W = static_cast<long>(dx.width());
  const std::size_t c = dx.channels();
  const auto offs = box_offsets(t0, h0, w0);
  for (long t = 0; t < T; ++t)
    for (long h = 0; h < H; ++h)
      for (long w = 0; w < W; ++w) {
        const S* urow = du.data() + dx.position(t, h, w) * du.extent(1);
        std::size_t idx = 0;
        for (const auto& o : offs) {
          const long tt = t + o[0], hh = h + o[1], ww = w + o[2];
          if (tt >= 0 && tt < T && hh >= 0 && hh < H && ww >= 0 && ww < W) {
            S* dst = dx.vec(dx.position(tt, hh, ww));
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += urow[idx++];
          } else {
            idx += c;
          }
        }
      }
}

}  // namespace detail

template <typename S>
struct RelationCache {
  FeatureMap<S> input;
  RelationNetParams<S> params;
  GridDims dims;
  Tensor<S> patches;    // (N, C * patch)
  Tensor<S> pre_mid;    // (N, C_mid) before relu
  Tensor<S> mid;        // (N, C_mid)
  Tensor<S> relations;  // (N, K) after optional softmax
  Tensor<S> g;          // (N, Cp)
  Tensor<S> mixed;      // y, (N, Cp)
  bool consumed = false;
};

template <typename S>
struct RelationOutput {
  FeatureMap<S> z;
  RelationCache<S> cache;

  RelationField<S> relations() const {
    return RelationField<S>{Tensor<S>(
        Shape{cache.dims.t, cache.dims.h, cache.dims.w, cache.params.kernel_size()},
        cache.relations.storage())};
  }
};

template <typename S>
struct RelationGradients {
  FeatureMap<S> x_grad;
  RelationNetParams<S> params;
};

// The per-position weights alone: patch -> linear -> relu -> linear ->
// optional softmax over the K window cells.
template <typename S>
RelationField<S> compute_relation_vectors(const FeatureMap<S>& x,
                                          const RelationNetParams<S>& params) {
  params.validate();
  if (params.channels() != x.channels())
    throw std::invalid_argument("compute_relation_vectors: channel count mismatch");
  const GridDims dims{x.time(), x.height(), x.width()};
  validate_relation_radii(params, dims);

  const Tensor<S> u = detail::gather_patches(x, params.t0, params.h0, params.w0);
  const Tensor<S> pre = matmul_nt(u, params.layer1);
  const Tensor<S> logits = matmul_nt(relu(pre), params.layer2);
  Tensor<S> r = params.normalize_relations ? softmax_rows(logits) : logits;
  return RelationField<S>{
      Tensor<S>(Shape{dims.t, dims.h, dims.w, params.kernel_size()}, r.storage())};
}

// Mix precomputed relation weights with the value vectors over each
// position's output window and add the residual.  Window cells outside the
// clip are skipped.
template <typename S>
FeatureMap<S> relation_aggregate(const FeatureMap<S>& x, const RelationField<S>& relations,
                                 const RelationNetParams<S>& params) {
  params.validate();
  if (params.channels() != x.channels())
    throw std::invalid_argument("relation_aggregate: channel count mismatch");
  if (relations.values.extent(0) != x.time() || relations.values.extent(1) != x.height() ||
      relations.values.extent(2) != x.width() ||
      relations.kernel_size() != params.kernel_size())
    throw std::invalid_argument("relation_aggregate: field shape disagrees with input");

  const long T = static_cast<long>(x.time());
  const long H = static_cast<long>(x.height());
  const long W = static_cast<long>(x.width());
  const std::size_t c = x.channels(), cp = params.bottleneck();
  const auto offs = box_offsets(params.t1, params.h1, params.w1);
  const Tensor<S> g = matmul_nt(as_matrix(x), params.w_g);

  FeatureMap<S> out(x.time(), x.height(), x.width(), c);
  std::vector<S> y(cp);
  for (long t = 0; t < T; ++t)
    for (long h = 0; h < H; ++h)
      for (long w = 0; w < W; ++w) {
        const std::size_t p = x.position(t, h, w);
        const S* rrow = relations.values.data() + p * offs.size();
        std::fill(y.begin(), y.end(), S(0));
        for (std::size_t k = 0; k < offs.size(); ++k) {
          const long tt = t + offs[k][0], hh = h + offs[k][1], ww = w + offs[k][2];
          if (tt < 0 || tt >= T || hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
          const S* gq = g.data() + x.position(tt, hh, ww) * cp;
          for (std::size_t l = 0; l < cp; ++l) y[l] += rrow[k] * gq[l];
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
  return out;
}

template <typename S>
RelationOutput<S> relation_forward(const FeatureMap<S>& x, const RelationNetParams<S>& params) {
  params.validate();
  if (params.channels() != x.channels())
    throw std::invalid_argument("relation_forward: channel count mismatch");
  const GridDims dims{x.time(), x.height(), x.width()};
  validate_relation_radii(params, dims);

  RelationOutput<S> out;
  RelationCache<S>& cc = out.cache;
  cc.input = x;
  cc.params = params;
  cc.dims = dims;

  cc.patches = detail::gather_patches(x, params.t0, params.h0, params.w0);
  cc.pre_mid = matmul_nt(cc.patches, params.layer1);
  cc.mid = relu(cc.pre_mid);
  Tensor<S> logits = matmul_nt(cc.mid, params.layer2);
  cc.relations = params.normalize_relations ? softmax_rows(logits) : std::move(logits);
  cc.g = matmul_nt(as_matrix(x), params.w_g);

  const long T = static_cast<long>(dims.t), H = static_cast<long>(dims.h),
             W = static_cast<long>(dims.w);
  const std::size_t cp = params.bottleneck();
  const auto offs = box_offsets(params.t1, params.h1, params.w1);
  cc.mixed = Tensor<S>(Shape{x.positions(), cp});
  for (long t = 0; t < T; ++t)
    for (long h = 0; h < H; ++h)
      for (long w = 0; w < W; ++w) {
        const std::size_t p = x.position(t, h, w);
        const S* rrow = cc.relations.data() + p * offs.size();
        S* y = cc.mixed.data() + p * cp;
        for (std::size_t k = 0; k < offs.size(); ++k) {
          const long tt = t + offs[k][0], hh = h + offs[k][1], ww = w + offs[k][2];
          if (tt < 0 || tt >= T || hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
          const S* gq = cc.g.data() + x.position(tt, hh, ww) * cp;
          for (std::size_t l = 0; l < cp; ++l) y[l] += rrow[k] * gq[l];
        }
      }

  Tensor<S> z = matmul_nt(cc.mixed, params.w_z);
  add_inplace(z, as_matrix(x));
  out.z = as_feature_map(z, dims.t, dims.h, dims.w);
  return out;
}

template <typename S>
RelationGradients<S> relation_backward(const FeatureMap<S>& out_grad, RelationCache<S>& cache) {
  if (cache.consumed) throw std::logic_error("relation_backward: cache already consumed");
  if (!out_grad.same_shape(cache.input))
    throw std::invalid_argument("relation_backward: gradient shape does not match cached input");
  cache.consumed = true;

  const RelationNetParams<S>& pp = cache.params;
  const Tensor<S> xm = as_matrix(cache.input);
  const Tensor<S> gz = as_matrix(out_grad);
  const GridDims dims = cache.dims;
  const long T = static_cast<long>(dims.t), H = static_cast<long>(dims.h),
             W = static_cast<long>(dims.w);
  const std::size_t cp = pp.bottleneck();
  const auto offs = box_offsets(pp.t1, pp.h1, pp.w1);

  RelationGradients<S> grads;
  grads.params = RelationNetParams<S>::zeros(pp.channels(), cp, pp.t0, pp.h0, pp.w0, pp.t1,
                                             pp.h1, pp.w1, pp.layer1.extent(0));
  grads.params.normalize_relations = pp.normalize_relations;

  Tensor<S> dx = gz;
  grads.params.w_z = matmul_tn(gz, cache.mixed);
  const Tensor<S> dy = matmul(gz, pp.w_z);  // (N, Cp)

  // Aggregation: y_p = sum_k r[p][k] * g[p + off_k] over in-range cells.
  Tensor<S> dr(Shape{cache.input.positions(), offs.size()});
  Tensor<S> dg(Shape{cache.input.positions(), cp});
  auto& x = cache.input;
  for (long t = 0; t < T; ++t)
    for (long h = 0; h < H; ++h)
      for (long w = 0; w < W; ++w) {
        const std::size_t p = x.position(t, h, w);
        const S* dyp = dy.data() + p * cp;
        const S* rrow = cache.relations.data() + p * offs.size();
        S* drrow = dr.data() + p * offs.size();
        for (std::size_t k = 0; k < offs.size(); ++k) {
          const long tt = t + offs[k][0], hh = h + offs[k][1], ww = w + offs[k][2];
          if (tt < 0 || tt >= T || hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
          const std::size_t q = x.position(tt, hh, ww);
          const S* gq = cache.g.data() + q * cp;
          S* dgq = dg.data() + q * cp;
          S acc = 0;
          for (std::size_t l = 0; l < cp; ++l) {
            acc += dyp[l] * gq[l];
            dgq[l] += rrow[k] * dyp[l];
          }
          drrow[k] = acc;
        }
      }

  grads.params.w_g = matmul_tn(dg, xm);
  add_inplace(dx, matmul(dg, pp.w_g));

  Tensor<S> dlogits =
      pp.normalize_relations ? softmax_rows_vjp(cache.relations, dr) : std::move(dr);
  grads.params.layer2 = matmul_tn(dlogits, cache.mid);
  const Tensor<S> dmid = matmul(dlogits, pp.layer2);
  const Tensor<S> dpre = relu_vjp(cache.pre_mid, dmid);
  grads.params.layer1 = matmul_tn(dpre, cache.patches);

  FeatureMap<S> dx_map = as_feature_map(dx, dims.t, dims.h, dims.w);
  const Tensor<S> du = matmul(dpre, pp.layer1);
  detail::scatter_patches(du, pp.t0, pp.h0, pp.w0, dx_map);
  grads.x_grad = std::move(dx_map);
  return grads;
}

// Start a relation block as an exact stand-in for a mask block whose radii
// match the output window: layer2 and w_z are zeroed, so every relation
// vector is the uniform window average and the block maps x to x.
template <typename S>
RelationNetParams<S> init_from_mask(long rt, long rh, long rw, RelationNetParams<S> params) {
  if (params.t1 != rt || params.h1 != rh || params.w1 != rw)
    throw std::invalid_argument("init_from_mask: window radii do not match the mask radii");
  params.layer2.fill(S(0));
  params.w_z.fill(S(0));
  return params;
}

}  // namespace nlv
