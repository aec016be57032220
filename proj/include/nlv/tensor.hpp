#pragma once

// Dense row-major tensors over float or double, plus the (T,H,W,C) feature
// map view used throughout the attention code.  Storage is a flat
// std::vector; indexing helpers cover the ranks that actually occur.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nlv {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  if (shape.empty() || shape.size() > 8)
    throw std::invalid_argument("tensor rank must be between 1 and 8");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor extents must be positive");
    if (e > SIZE_MAX / n) throw std::invalid_argument("tensor extent overflow");
    n *= e;
  }
  return n;
}

template <typename S>
class Tensor {
  static_assert(std::is_floating_point_v<S>);

 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), S(0)) {}

  Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
      throw std::invalid_argument("tensor data size does not match shape");
  }

  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  const Shape& shape() const { return shape_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& storage() { return data_; }
  const std::vector<S>& storage() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  // Rank-specific accessors.  Callers are expected to know the rank; the
  // stride math is unchecked in release builds beyond the rank assertion.
  S& at(std::size_t i, std::size_t j) {
    check_rank(2);
    return data_[i * shape_[1] + j];
  }
  const S& at(std::size_t i, std::size_t j) const {
    check_rank(2);
    return data_[i * shape_[1] + j];
  }
  S& at(std::size_t i, std::size_t j, std::size_t k) {
    check_rank(3);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const S& at(std::size_t i, std::size_t j, std::size_t k) const {
    check_rank(3);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  S& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    check_rank(4);
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const S& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    check_rank(4);
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  S& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l, std::size_t m) {
    check_rank(5);
    return data_[(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l) * shape_[4] + m];
  }
  const S& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l, std::size_t m) const {
    check_rank(5);
    return data_[(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l) * shape_[4] + m];
  }

  void fill(S value) { data_.assign(data_.size(), value); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  void check_rank(std::size_t r) const {
    if (shape_.size() != r) throw std::invalid_argument("tensor rank mismatch");
  }

  Shape shape_;
  std::vector<S> data_;
};

inline std::string shape_to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// A video feature map: rank-4 tensor laid out (time, height, width, channel),
// channel fastest.  Positions are the T*H*W spatio-temporal sites; the flat
// position index is p = (t*H + h)*W + w, matching the memory order of the
// leading three axes.  Most of the attention code treats the map as an
// (N, C) matrix of per-position feature vectors through vec().
template <typename S>
struct FeatureMap {
  Tensor<S> values;

  FeatureMap() = default;

  explicit FeatureMap(Tensor<S> v) : values(std::move(v)) {
    if (values.rank() != 4)
      throw std::invalid_argument("feature map must have shape (T,H,W,C)");
  }

  FeatureMap(std::size_t t, std::size_t h, std::size_t w, std::size_t c)
      : values(Shape{t, h, w, c}) {}

  std::size_t time() const { return values.extent(0); }
  std::size_t height() const { return values.extent(1); }
  std::size_t width() const { return values.extent(2); }
  std::size_t channels() const { return values.extent(3); }
  std::size_t positions() const { return time() * height() * width(); }

  std::size_t position(std::size_t t, std::size_t h, std::size_t w) const {
    return (t * height() + h) * width() + w;
  }

  std::array<std::size_t, 3> coords(std::size_t p) const {
    std::size_t w = p % width();
    std::size_t rest = p / width();
    return {rest / height(), rest % height(), w};
  }

  S* vec(std::size_t p) { return values.data() + p * channels(); }
  const S* vec(std::size_t p) const { return values.data() + p * channels(); }

  bool same_shape(const FeatureMap& other) const { return values.same_shape(other.values); }
};

}  // namespace nlv
