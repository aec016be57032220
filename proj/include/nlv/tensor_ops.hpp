#pragma once

// Matrix kernels and pointwise activations shared by the attention blocks.
// Rank-2 tensors are plain row-major matrices.  The three matmul variants
// cover every transpose combination the backward passes need without ever
// materialising a transposed copy.

#include <algorithm>
#include <cmath>
#include <random>

#include "nlv/tensor.hpp"

namespace nlv {

// C = A * B, shapes (n,k) x (k,m) -> (n,m).
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
    throw std::invalid_argument("matmul: incompatible shapes");
  const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(1);
  Tensor<S> c(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const S* arow = a.data() + i * k;
    S* crow = c.data() + i * m;
    for (std::size_t l = 0; l < k; ++l) {
      const S av = arow[l];
      if (av == S(0)) continue;
      const S* brow = b.data() + l * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C = A * B^T, shapes (n,k) x (m,k) -> (n,m).  Both operands are walked
// row-wise, which keeps the inner loop a contiguous dot product.
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1))
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(0);
  Tensor<S> c(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const S* arow = a.data() + i * k;
    S* crow = c.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const S* brow = b.data() + j * k;
      S acc = 0;
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] = acc;
    }
  }
  return c;
}

// C = A^T * B, shapes (k,n) x (k,m) -> (n,m).
template <typename S>
Tensor<S> matmul_tn(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0))
    throw std::invalid_argument("matmul_tn: incompatible shapes");
  const std::size_t k = a.extent(0), n = a.extent(1), m = b.extent(1);
  Tensor<S> c(Shape{n, m});
  for (std::size_t l = 0; l < k; ++l) {
    const S* arow = a.data() + l * n;
    const S* brow = b.data() + l * m;
    for (std::size_t i = 0; i < n; ++i) {
      const S av = arow[i];
      if (av == S(0)) continue;
      S* crow = c.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <typename S>
void add_inplace(Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

template <typename S>
void scale_inplace(Tensor<S>& a, S s) {
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] *= s;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> out = x;
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (out[i] < S(0)) out[i] = S(0);
  return out;
}

// Gradient of relu given the pre-activation values.  The kink at zero is
// resolved as relu'(0) = 0.
template <typename S>
Tensor<S> relu_vjp(const Tensor<S>& pre, const Tensor<S>& out_grad) {
  if (!pre.same_shape(out_grad)) throw std::invalid_argument("relu_vjp: shape mismatch");
  Tensor<S> g = out_grad;
  for (std::size_t i = 0; i < g.numel(); ++i)
    if (pre[i] <= S(0)) g[i] = S(0);
  return g;
}

// Row-wise softmax of an (n,m) matrix.  The row maximum is subtracted
// before exponentiation so large scores cannot overflow.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& scores) {
  if (scores.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 input required");
  const std::size_t n = scores.extent(0), m = scores.extent(1);
  Tensor<S> out(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = scores.data() + i * m;
    S* orow = out.data() + i * m;
    S mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    S sum = 0;
    for (std::size_t j = 0; j < m; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < m; ++j) orow[j] /= sum;
  }
  return out;
}

// Backward pass of softmax_rows: given the softmax output a and the gradient
// with respect to it, the score gradient is a * (g - <a,g>) per row.
template <typename S>
Tensor<S> softmax_rows_vjp(const Tensor<S>& softmax_out, const Tensor<S>& out_grad) {
  if (!softmax_out.same_shape(out_grad) || softmax_out.rank() != 2)
    throw std::invalid_argument("softmax_rows_vjp: shape mismatch");
  const std::size_t n = softmax_out.extent(0), m = softmax_out.extent(1);
  Tensor<S> g(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const S* a = softmax_out.data() + i * m;
    const S* d = out_grad.data() + i * m;
    S dot = 0;
    for (std::size_t j = 0; j < m; ++j) dot += a[j] * d[j];
    S* grow = g.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) grow[j] = a[j] * (d[j] - dot);
  }
  return g;
}

// 1x1x1 projection of a feature map: every position's channel vector is
// multiplied by the same (c_out, c_in) weight matrix.
template <typename S>
FeatureMap<S> project_pointwise(const FeatureMap<S>& x, const Tensor<S>& weights) {
  if (weights.rank() != 2 || weights.extent(1) != x.channels())
    throw std::invalid_argument("project_pointwise: weight shape mismatch");
  const std::size_t n = x.positions();
  const std::size_t cin = x.channels(), cout = weights.extent(0);
  FeatureMap<S> out(x.time(), x.height(), x.width(), cout);
  for (std::size_t p = 0; p < n; ++p) {
    const S* xin = x.vec(p);
    S* xo = out.vec(p);
    for (std::size_t o = 0; o < cout; ++o) {
      const S* wrow = weights.data() + o * cin;
      S acc = 0;
      for (std::size_t c = 0; c < cin; ++c) acc += wrow[c] * xin[c];
      xo[o] = acc;
    }
  }
  return out;
}

// Reinterpret a feature map as its (N, C) matrix of position vectors.  The
// storage order already matches, so this is a copy of the buffer only.
template <typename S>
Tensor<S> as_matrix(const FeatureMap<S>& x) {
  return Tensor<S>(Shape{x.positions(), x.channels()}, x.values.storage());
}

template <typename S>
FeatureMap<S> as_feature_map(const Tensor<S>& m, std::size_t t, std::size_t h, std::size_t w) {
  if (m.rank() != 2 || m.extent(0) != t * h * w)
    throw std::invalid_argument("as_feature_map: row count does not match grid");
  return FeatureMap<S>(Tensor<S>(Shape{t, h, w, m.extent(1)}, m.storage()));
}

template <typename S>
void fill_uniform(Tensor<S>& t, S lo, S hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<S> dist(lo, hi);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
}

// Uniform init with the +-sqrt(6/(fan_in+fan_out)) bound that keeps
// activation scale roughly constant through a linear layer.
template <typename S>
void fill_glorot(Tensor<S>& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const S bound = std::sqrt(S(6) / S(fan_in + fan_out));
  fill_uniform(t, -bound, bound, rng);
}

}  // namespace nlv
