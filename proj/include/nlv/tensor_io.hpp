#pragma once

// Binary tensor files.  Layout, all little-endian:
//
//   bytes 0..3   magic "NLT1"
//   byte  4      dtype: 0 = float32, 1 = float64
//   byte  5      rank r, 1..8
//   then         r extents as u64
//   then         payload, row-major IEEE-754 scalars
//
// Readers reject anything malformed with a status describing the first
// problem found, so callers can distinguish a truncated download from a
// file of the wrong kind.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <variant>

#include "nlv/tensor.hpp"

namespace nlv {

enum class TensorIoStatus {
  ok,
  io_error,       // file cannot be opened or written
  bad_magic,      // leading bytes are not "NLT1"
  bad_dtype,      // dtype byte is neither 0 nor 1
  bad_rank,       // rank outside 1..8
  bad_extent,     // zero extent or element count overflow
  truncated,      // header or payload ends early
  trailing_data,  // bytes remain after the payload
};

inline const char* to_string(TensorIoStatus s) {
  switch (s) {
    case TensorIoStatus::ok: return "ok";
    case TensorIoStatus::io_error: return "io error";
    case TensorIoStatus::bad_magic: return "bad magic";
    case TensorIoStatus::bad_dtype: return "bad dtype";
    case TensorIoStatus::bad_rank: return "bad rank";
    case TensorIoStatus::bad_extent: return "bad extent";
    case TensorIoStatus::truncated: return "truncated file";
    case TensorIoStatus::trailing_data: return "trailing data";
  }
  return "unknown";
}

class TensorIoError : public std::runtime_error {
 public:
  TensorIoError(TensorIoStatus status, const std::string& path)
      : std::runtime_error(std::string(to_string(status)) + ": " + path), status_(status) {}
  TensorIoStatus status() const { return status_; }

 private:
  TensorIoStatus status_;
};

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename S>
void put_scalar(std::string& out, S v) {
  if constexpr (sizeof(S) == 4) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  } else {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

class ByteReader {
 public:
  ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  bool take(void* dst, std::size_t count) {
    if (pos_ + count > n_) return false;
    std::memcpy(dst, p_ + pos_, count);
    pos_ += count;
    return true;
  }

  bool take_u64(std::uint64_t& v) {
    unsigned char b[8];
    if (!take(b, 8)) return false;
    v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return true;
  }

  template <typename S>
  bool take_scalar(S& v) {
    if constexpr (sizeof(S) == 4) {
      unsigned char b[4];
      if (!take(b, 4)) return false;
      std::uint32_t bits = 0;
      for (int i = 3; i >= 0; --i) bits = (bits << 8) | b[i];
      v = std::bit_cast<S>(bits);
    } else {
      std::uint64_t bits;
      if (!take_u64(bits)) return false;
      v = std::bit_cast<S>(bits);
    }
    return true;
  }

  std::size_t remaining() const { return n_ - pos_; }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

template <typename S>
Tensor<S> parse_payload(ByteReader& r, const Shape& shape, const std::string& path) {
  Tensor<S> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i)
    if (!r.take_scalar(t[i])) throw TensorIoError(TensorIoStatus::truncated, path);
  if (r.remaining() != 0) throw TensorIoError(TensorIoStatus::trailing_data, path);
  return t;
}

}  // namespace detail

template <typename S>
std::string encode_tensor(const Tensor<S>& t) {
  static_assert(sizeof(S) == 4 || sizeof(S) == 8);
  std::string out;
  out.reserve(6 + 8 * t.rank() + sizeof(S) * t.numel());
  out += "NLT1";
  out.push_back(sizeof(S) == 4 ? '\x00' : '\x01');
  out.push_back(static_cast<char>(t.rank()));
  for (std::size_t a = 0; a < t.rank(); ++a) detail::put_u64(out, t.extent(a));
  for (std::size_t i = 0; i < t.numel(); ++i) detail::put_scalar(out, t[i]);
  return out;
}

inline AnyTensor decode_tensor(const unsigned char* bytes, std::size_t size,
                               const std::string& path = "<memory>") {
  detail::ByteReader r(bytes, size);
  char magic[4];
  if (!r.take(magic, 4)) throw TensorIoError(TensorIoStatus::truncated, path);
  if (std::memcmp(magic, "NLT1", 4) != 0) throw TensorIoError(TensorIoStatus::bad_magic, path);
  unsigned char dtype, rank;
  if (!r.take(&dtype, 1) || !r.take(&rank, 1))
    throw TensorIoError(TensorIoStatus::truncated, path);
  if (dtype > 1) throw TensorIoError(TensorIoStatus::bad_dtype, path);
  if (rank < 1 || rank > 8) throw TensorIoError(TensorIoStatus::bad_rank, path);
  Shape shape(rank);
  for (unsigned a = 0; a < rank; ++a) {
    std::uint64_t e;
    if (!r.take_u64(e)) throw TensorIoError(TensorIoStatus::truncated, path);
    if (e == 0) throw TensorIoError(TensorIoStatus::bad_extent, path);
    shape[a] = static_cast<std::size_t>(e);
  }
  std::size_t numel = 1;
  for (std::size_t e : shape) {
    if (e > SIZE_MAX / numel) throw TensorIoError(TensorIoStatus::bad_extent, path);
    numel *= e;
  }
  if (dtype == 0) return detail::parse_payload<float>(r, shape, path);
  return detail::parse_payload<double>(r, shape, path);
}

template <typename S>
void write_tensor(const Tensor<S>& t, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw TensorIoError(TensorIoStatus::io_error, path.string());
  const std::string bytes = encode_tensor(t);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw TensorIoError(TensorIoStatus::io_error, path.string());
}

inline AnyTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorIoError(TensorIoStatus::io_error, path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw TensorIoError(TensorIoStatus::io_error, path.string());
  return decode_tensor(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                       path.string());
}

// Convenience for call sites that require one specific scalar type.
template <typename S>
Tensor<S> read_tensor_as(const std::filesystem::path& path) {
  AnyTensor any = read_tensor(path);
  if (auto* t = std::get_if<Tensor<S>>(&any)) return std::move(*t);
  throw TensorIoError(TensorIoStatus::bad_dtype, path.string());
}

}  // namespace nlv
