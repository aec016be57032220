#pragma once

// A miniature video classifier assembling the pieces: an inflated 2D stem
// convolution, a rectifier, optionally one attention or relation block,
// global average pooling and a linear classifier.
//
// The stem always has temporal extent 1, so without a block the model is
// temporally blind by construction: permuting the input frames permutes
// per-frame features and the average pool erases the permutation.  The
// inserted block is the only component that can relate different frames.

#include <cstdint>
#include <string>
#include <vector>

#include "nlv/conv.hpp"
#include "nlv/mask.hpp"
#include "nlv/nonlocal.hpp"
#include "nlv/relation.hpp"
#include "nlv/tensor.hpp"
#include "nlv/tensor_ops.hpp"

namespace nlv {

enum class BlockKind { none, nonlocal, mask_nonlocal, relation };

inline const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::none: return "none";
    case BlockKind::nonlocal: return "nonlocal";
    case BlockKind::mask_nonlocal: return "mask_nonlocal";
    case BlockKind::relation: return "relation";
  }
  return "none";
}

inline BlockKind block_kind_from_string(const std::string& s) {
  if (s == "none") return BlockKind::none;
  if (s == "nonlocal") return BlockKind::nonlocal;
  if (s == "mask_nonlocal") return BlockKind::mask_nonlocal;
  if (s == "relation") return BlockKind::relation;
  throw std::invalid_argument("unknown block kind: " + s);
}

struct ToyModelConfig {
  long num_classes = 8;
  long feat_channels = 8;
  long stem_kernel = 3;  // spatial extent; temporal extent is fixed at 1
  long bottleneck = 2;
  BlockKind block = BlockKind::none;
  MaskSpec mask{Radius::fraction(1, 2), Radius::fraction(3, 7), Radius::fraction(3, 7)};
  long rel_t0 = 1, rel_h0 = 2, rel_w0 = 2;
  long rel_t1 = 0, rel_h1 = 1, rel_w1 = 1;
  long rel_hidden = 0;  // 0 = twice the window size
  bool rel_normalize = true;
};

struct ToyModel {
  ToyModelConfig cfg;
  Kernel3D<double> stem;                // (C_feat, 1, 1, k, k)
  ProjectionParams<double> attn;        // nonlocal / mask_nonlocal
  RelationNetParams<double> rel;        // relation
  Tensor<double> classifier_w;          // (num_classes, C_feat)
  Tensor<double> classifier_b;          // (num_classes)

  bool uses_attention() const {
    return cfg.block == BlockKind::nonlocal || cfg.block == BlockKind::mask_nonlocal;
  }
};

// Classifier starts at zero so an identity-initialised block leaves the
// initial loss at exactly ln(num_classes).
inline ToyModel make_toy_model(const ToyModelConfig& cfg, std::uint64_t seed) {
  if (cfg.num_classes < 2) throw std::invalid_argument("toy model: need at least two classes");
  if (cfg.feat_channels < 1 || cfg.bottleneck < 1 || cfg.stem_kernel < 1 ||
      cfg.stem_kernel % 2 == 0)
    throw std::invalid_argument("toy model: stem kernel must be odd and widths positive");
  ToyModel m;
  m.cfg = cfg;
  m.stem = inflate_kernel(
      Kernel2D<double>::random_init(cfg.feat_channels, 1, cfg.stem_kernel, seed), 1);
  if (m.uses_attention())
    m.attn = ProjectionParams<double>::random_init(cfg.feat_channels, cfg.bottleneck, seed + 1);
  if (cfg.block == BlockKind::relation) {
    m.rel = RelationNetParams<double>::random_init(
        cfg.feat_channels, cfg.bottleneck, cfg.rel_t0, cfg.rel_h0, cfg.rel_w0, cfg.rel_t1,
        cfg.rel_h1, cfg.rel_w1, seed + 2, cfg.rel_hidden);
    m.rel.normalize_relations = cfg.rel_normalize;
  }
  m.classifier_w = Tensor<double>(
      Shape{static_cast<std::size_t>(cfg.num_classes), static_cast<std::size_t>(cfg.feat_channels)});
  m.classifier_b = Tensor<double>(Shape{static_cast<std::size_t>(cfg.num_classes)});
  return m;
}

inline ToyModel zero_like(const ToyModel& m) {
  ToyModel z;
  z.cfg = m.cfg;
  z.stem = Kernel3D<double>(Tensor<double>(m.stem.weights.shape()));
  if (m.uses_attention())
    z.attn = ProjectionParams<double>::zeros(m.attn.channels(), m.attn.bottleneck());
  if (m.cfg.block == BlockKind::relation)
    z.rel = RelationNetParams<double>::zeros(m.rel.channels(), m.rel.bottleneck(), m.rel.t0,
                                             m.rel.h0, m.rel.w0, m.rel.t1, m.rel.h1, m.rel.w1,
                                             m.rel.layer1.extent(0));
  z.classifier_w = Tensor<double>(m.classifier_w.shape());
  z.classifier_b = Tensor<double>(m.classifier_b.shape());
  return z;
}

// Parameter tensors in a fixed traversal order shared by gradients,
// optimiser state and serialization.
inline std::vector<std::pair<std::string, Tensor<double>*>> model_params(ToyModel& m) {
  std::vector<std::pair<std::string, Tensor<double>*>> out;
  out.emplace_back("stem", &m.stem.weights);
  if (m.uses_attention()) {
    out.emplace_back("attn_theta", &m.attn.w_theta);
    out.emplace_back("attn_phi", &m.attn.w_phi);
    out.emplace_back("attn_g", &m.attn.w_g);
    out.emplace_back("attn_z", &m.attn.w_z);
  }
  if (m.cfg.block == BlockKind::relation) {
    out.emplace_back("rel_layer1", &m.rel.layer1);
    out.emplace_back("rel_layer2", &m.rel.layer2);
    out.emplace_back("rel_g", &m.rel.w_g);
    out.emplace_back("rel_z", &m.rel.w_z);
  }
  out.emplace_back("classifier_w", &m.classifier_w);
  out.emplace_back("classifier_b", &m.classifier_b);
  return out;
}

namespace detail {

// (C, T, H, W) -> (T, H, W, C)
inline FeatureMap<double> to_feature_map(const Tensor<double>& cf) {
  const std::size_t c = cf.extent(0), t = cf.extent(1), h = cf.extent(2), w = cf.extent(3);
  FeatureMap<double> out(t, h, w, c);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t hi = 0; hi < h; ++hi)
        for (std::size_t wi = 0; wi < w; ++wi)
          out.values.at(ti, hi, wi, ci) = cf.at(ci, ti, hi, wi);
  return out;
}

// (T, H, W, C) -> (C, T, H, W)
inline Tensor<double> to_channels_first(const FeatureMap<double>& map) {
  const std::size_t c = map.channels(), t = map.time(), h = map.height(), w = map.width();
  Tensor<double> out(Shape{c, t, h, w});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t hi = 0; hi < h; ++hi)
        for (std::size_t wi = 0; wi < w; ++wi)
          out.at(ci, ti, hi, wi) = map.values.at(ti, hi, wi, ci);
  return out;
}

inline Tensor<double> video_to_channels_first(const Tensor<double>& video) {
  if (video.rank() != 4 || video.extent(3) != 1)
    throw std::invalid_argument("toy model: video must have shape (T, H, W, 1)");
  // Single channel: (T,H,W,1) and (1,T,H,W) share the same flat layout.
  return Tensor<double>(Shape{1, video.extent(0), video.extent(1), video.extent(2)},
                        video.storage());
}

}  // namespace detail

struct ModelCache {
  Tensor<double> input_cf;        // (1, T, H, W)
  Tensor<double> stem_pre;        // (C, T, H, W) before the rectifier
  FeatureMap<double> block_in;    // rectified stem output
  NonlocalCache<double> attn_cache;
  RelationCache<double> rel_cache;
  Tensor<double> pooled;          // (C_feat)
};

inline ConvPad stem_padding(const ToyModel& m) {
  return ConvPad{0, (m.cfg.stem_kernel - 1) / 2, (m.cfg.stem_kernel - 1) / 2};
}

inline Tensor<double> classifier_logits(const ToyModel& m, const Tensor<double>& pooled) {
  Tensor<double> logits = m.classifier_b;
  for (std::size_t o = 0; o < logits.numel(); ++o)
    for (std::size_t c = 0; c < pooled.numel(); ++c)
      logits[o] += m.classifier_w.at(o, c) * pooled[c];
  return logits;
}

inline Tensor<double> global_average_pool(const FeatureMap<double>& map) {
  Tensor<double> pooled(Shape{map.channels()});
  for (std::size_t p = 0; p < map.positions(); ++p)
    for (std::size_t c = 0; c < map.channels(); ++c) pooled[c] += map.vec(p)[c];
  scale_inplace(pooled, 1.0 / static_cast<double>(map.positions()));
  return pooled;
}

inline Tensor<double> model_forward_cached(const ToyModel& m, const Tensor<double>& video,
                                           ModelCache& cache) {
  cache.input_cf = detail::video_to_channels_first(video);
  cache.stem_pre = conv3d(cache.input_cf, m.stem, stem_padding(m));
  cache.block_in = detail::to_feature_map(relu(cache.stem_pre));

  switch (m.cfg.block) {
    case BlockKind::none:
      cache.pooled = global_average_pool(cache.block_in);
      break;
    case BlockKind::nonlocal: {
      auto out = nonlocal_forward(cache.block_in, m.attn, MaskSpec::all_infinite());
      cache.pooled = global_average_pool(out.z);
      cache.attn_cache = std::move(out.cache);
      break;
    }
    case BlockKind::mask_nonlocal: {
      auto out = nonlocal_forward(cache.block_in, m.attn, m.cfg.mask);
      cache.pooled = global_average_pool(out.z);
      cache.attn_cache = std::move(out.cache);
      break;
    }
    case BlockKind::relation: {
      auto out = relation_forward(cache.block_in, m.rel);
      cache.pooled = global_average_pool(out.z);
      cache.rel_cache = std::move(out.cache);
      break;
    }
  }
  return classifier_logits(m, cache.pooled);
}

// Evaluation path: same arithmetic, but attention rows are streamed so no
// (N, N) matrix or backward cache is materialised.
inline Tensor<double> model_forward(const ToyModel& m, const Tensor<double>& video) {
  const Tensor<double> input_cf = detail::video_to_channels_first(video);
  const FeatureMap<double> block_in =
      detail::to_feature_map(relu(conv3d(input_cf, m.stem, stem_padding(m))));
  Tensor<double> pooled;
  switch (m.cfg.block) {
    case BlockKind::none:
      pooled = global_average_pool(block_in);
      break;
    case BlockKind::nonlocal:
      pooled = global_average_pool(nonlocal_apply(block_in, m.attn, MaskSpec::all_infinite()));
      break;
    case BlockKind::mask_nonlocal:
      pooled = global_average_pool(nonlocal_apply(block_in, m.attn, m.cfg.mask));
      break;
    case BlockKind::relation:
      pooled = global_average_pool(relation_forward(block_in, m.rel).z);
      break;
  }
  return classifier_logits(m, pooled);
}

// Gradients come back shaped like the model itself (zero cfg-dependent
// tensors for the inactive block).
inline ToyModel model_backward(const ToyModel& m, ModelCache& cache,
                               const Tensor<double>& logit_grad) {
  if (logit_grad.numel() != static_cast<std::size_t>(m.cfg.num_classes))
    throw std::invalid_argument("model_backward: logit gradient size mismatch");
  ToyModel grads = zero_like(m);

  // Classifier.
  for (std::size_t o = 0; o < logit_grad.numel(); ++o) {
    grads.classifier_b[o] = logit_grad[o];
    for (std::size_t c = 0; c < cache.pooled.numel(); ++c)
      grads.classifier_w.at(o, c) = logit_grad[o] * cache.pooled[c];
  }
  Tensor<double> dpooled(cache.pooled.shape());
  for (std::size_t c = 0; c < dpooled.numel(); ++c)
    for (std::size_t o = 0; o < logit_grad.numel(); ++o)
      dpooled[c] += m.classifier_w.at(o, c) * logit_grad[o];

  // Average pool spreads the gradient evenly over positions.
  const std::size_t n = cache.block_in.positions();
  FeatureMap<double> dblock_out(cache.block_in.time(), cache.block_in.height(),
                                cache.block_in.width(), cache.block_in.channels());
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t c = 0; c < dblock_out.channels(); ++c)
      dblock_out.vec(p)[c] = dpooled[c] / static_cast<double>(n);

  FeatureMap<double> dblock_in;
  switch (m.cfg.block) {
    case BlockKind::none:
      dblock_in = std::move(dblock_out);
      break;
    case BlockKind::nonlocal:
    case BlockKind::mask_nonlocal: {
      auto bg = nonlocal_backward(dblock_out, cache.attn_cache);
      dblock_in = std::move(bg.x_grad);
      grads.attn = std::move(bg.params);
      break;
    }
    case BlockKind::relation: {
      auto bg = relation_backward(dblock_out, cache.rel_cache);
      dblock_in = std::move(bg.x_grad);
      grads.rel = std::move(bg.params);
      break;
    }
  }

  const Tensor<double> dstem_out =
      relu_vjp(cache.stem_pre, detail::to_channels_first(dblock_in));
  auto cg = conv3d_backward(cache.input_cf, m.stem, stem_padding(m), dstem_out);
  grads.stem = Kernel3D<double>(std::move(cg.kernel_grad));
  return grads;
}

struct CrossEntropy {
  double loss = 0;
  Tensor<double> logit_grad;
};

inline CrossEntropy cross_entropy(const Tensor<double>& logits, long label) {
  if (logits.rank() != 1) throw std::invalid_argument("cross_entropy: logits must be rank 1");
  if (label < 0 || label >= static_cast<long>(logits.numel()))
    throw std::invalid_argument("cross_entropy: label out of range");
  double mx = logits[0];
  for (std::size_t c = 1; c < logits.numel(); ++c) mx = std::max(mx, logits[c]);
  double sum = 0;
  for (std::size_t c = 0; c < logits.numel(); ++c) sum += std::exp(logits[c] - mx);
  CrossEntropy out;
  out.loss = std::log(sum) - (logits[static_cast<std::size_t>(label)] - mx);
  out.logit_grad = Tensor<double>(logits.shape());
  for (std::size_t c = 0; c < logits.numel(); ++c)
    out.logit_grad[c] = std::exp(logits[c] - mx) / sum;
  out.logit_grad[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

inline long argmax_class(const Tensor<double>& logits) {
  long best = 0;
  for (std::size_t c = 1; c < logits.numel(); ++c)
    if (logits[c] > logits[static_cast<std::size_t>(best)]) best = static_cast<long>(c);
  return best;  // ties keep the lower index
}

}  // namespace nlv
