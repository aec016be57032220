#pragma once

// Attention neighbourhood masks.  A mask restricts each position's
// attention support to a box of radius (dt, dh, dw) around it, clipped at
// the clip boundary.  Radii can be absolute counts, fractions of the axis
// extent (resolved per feature map as floor(num * extent / den)), or
// infinite, which leaves the axis unrestricted.

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "nlv/tensor.hpp"

namespace nlv {

struct GridDims {
  std::size_t t = 1, h = 1, w = 1;

  std::size_t positions() const { return t * h * w; }

  bool operator==(const GridDims&) const = default;
};

class Radius {
 public:
  static Radius infinite() { return Radius(Kind::infinite, 0, 1); }

  static Radius absolute(std::int64_t r) {
    if (r < 0) throw std::invalid_argument("radius must be non-negative");
    return Radius(Kind::absolute, r, 1);
  }

  static Radius fraction(std::int64_t num, std::int64_t den) {
    if (num < 0 || den <= 0) throw std::invalid_argument("radius fraction must be non-negative");
    return Radius(Kind::fraction, num, den);
  }

  bool is_infinite() const { return kind_ == Kind::infinite; }

  // Concrete radius for an axis of the given extent.  Infinite resolves to
  // the extent itself, which already covers the whole axis after clipping.
  std::size_t resolve(std::size_t extent) const {
    switch (kind_) {
      case Kind::infinite: return extent;
      case Kind::absolute: return static_cast<std::size_t>(num_);
      case Kind::fraction:
        return static_cast<std::size_t>((static_cast<std::uint64_t>(num_) * extent) /
                                        static_cast<std::uint64_t>(den_));
    }
    return extent;
  }

  // Accepts "inf", a plain integer, or "num/den".
  static Radius parse(std::string_view text) {
    if (text == "inf") return infinite();
    auto parse_int = [](std::string_view s) -> std::int64_t {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::invalid_argument("bad radius: " + std::string(s));
      return v;
    };
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return absolute(parse_int(text));
    return fraction(parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1)));
  }

  std::string to_config() const {
    switch (kind_) {
      case Kind::infinite: return "inf";
      case Kind::absolute: return std::to_string(num_);
      case Kind::fraction: return std::to_string(num_) + "/" + std::to_string(den_);
    }
    return "inf";
  }

  bool operator==(const Radius&) const = default;

 private:
  enum class Kind { infinite, absolute, fraction };

  Radius(Kind k, std::int64_t num, std::int64_t den) : kind_(k), num_(num), den_(den) {}

  Kind kind_;
  std::int64_t num_;
  std::int64_t den_;
};

struct MaskSpec {
  Radius dt = Radius::infinite();
  Radius dh = Radius::infinite();
  Radius dw = Radius::infinite();

  static MaskSpec all_infinite() { return MaskSpec{}; }

  bool is_all_infinite() const {
    return dt.is_infinite() && dh.is_infinite() && dw.is_infinite();
  }

  bool operator==(const MaskSpec&) const = default;
};

// Mask radii pinned against one specific grid.
struct ResolvedMask {
  std::size_t rt = 0, rh = 0, rw = 0;
  GridDims dims;

  bool covers_everything() const {
    return rt + 1 >= dims.t && rh + 1 >= dims.h && rw + 1 >= dims.w;
  }
};

inline ResolvedMask resolve_mask(const MaskSpec& spec, GridDims dims) {
  return ResolvedMask{spec.dt.resolve(dims.t), spec.dh.resolve(dims.h), spec.dw.resolve(dims.w),
                      dims};
}

struct AxisWindow {
  std::size_t lo = 0, hi = 0;  // inclusive bounds

  std::size_t length() const { return hi - lo + 1; }
};

inline AxisWindow axis_window(std::size_t center, std::size_t radius, std::size_t extent) {
  AxisWindow w;
  w.lo = center > radius ? center - radius : 0;
  w.hi = center + radius;
  if (w.hi >= extent) w.hi = extent - 1;
  return w;
}

// True when q lies inside p's neighbourhood box.
inline bool mask_contains(const ResolvedMask& m, std::size_t p, std::size_t q) {
  const std::size_t n = m.dims.positions();
  if (p >= n || q >= n) throw std::invalid_argument("mask_contains: position out of range");
  auto split = [&](std::size_t i) {
    const std::size_t w = i % m.dims.w;
    const std::size_t rest = i / m.dims.w;
    return std::array<std::size_t, 3>{rest / m.dims.h, rest % m.dims.h, w};
  };
  const auto a = split(p), b = split(q);
  auto within = [](std::size_t x, std::size_t y, std::size_t r) {
    return (x > y ? x - y : y - x) <= r;
  };
  return within(a[0], b[0], m.rt) && within(a[1], b[1], m.rh) && within(a[2], b[2], m.rw);
}

inline std::size_t neighbourhood_size(const ResolvedMask& m, std::size_t t, std::size_t h,
                                      std::size_t w) {
  return axis_window(t, m.rt, m.dims.t).length() * axis_window(h, m.rh, m.dims.h).length() *
         axis_window(w, m.rw, m.dims.w).length();
}

// Sum of neighbourhood sizes over all positions.  The box factorises per
// axis, so the total is the product of the per-axis window-length sums.
inline unsigned long long neighbourhood_total(const ResolvedMask& m) {
  auto axis_sum = [](std::size_t extent, std::size_t radius) {
    unsigned long long s = 0;
    for (std::size_t i = 0; i < extent; ++i) s += axis_window(i, radius, extent).length();
    return s;
  };
  return axis_sum(m.dims.t, m.rt) * axis_sum(m.dims.h, m.rh) * axis_sum(m.dims.w, m.rw);
}

}  // namespace nlv
