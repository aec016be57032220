#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "nlv/tensor.hpp"
#include "nlv/tensor_io.hpp"

namespace {

using namespace nlv;

TEST(Tensor, RejectsDegenerateShapes) {
  EXPECT_THROW(shape_numel(Shape{}), std::invalid_argument);
  EXPECT_THROW(shape_numel(Shape{2, 0, 3}), std::invalid_argument);
  EXPECT_THROW(shape_numel(Shape{1, 1, 1, 1, 1, 1, 1, 1, 1}), std::invalid_argument);
  EXPECT_EQ(shape_numel(Shape{2, 3, 4}), 24u);
}

TEST(Tensor, IndexingMatchesRowMajorStrides) {
  Tensor<double> t(Shape{2, 3, 4, 5});
  t.at(1, 2, 3, 4) = 9.5;
  EXPECT_EQ(t[((1 * 3 + 2) * 4 + 3) * 5 + 4], 9.5);
  t.at(0, 0, 0, 0) = -1.0;
  EXPECT_EQ(t[0], -1.0);
  EXPECT_THROW(t.at(0, 1), std::invalid_argument);
}

TEST(Tensor, DataSizeMustMatchShape) {
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), std::invalid_argument);
  Tensor<float> ok(Shape{2, 2}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(ok.at(1, 0), 3.0f);
}

TEST(FeatureMap, PositionAndCoordsRoundTrip) {
  FeatureMap<double> m(3, 4, 5, 2);
  std::size_t p = 0;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 5; ++w, ++p) {
        EXPECT_EQ(m.position(t, h, w), p);
        const auto c = m.coords(p);
        EXPECT_EQ(c[0], t);
        EXPECT_EQ(c[1], h);
        EXPECT_EQ(c[2], w);
      }
  EXPECT_EQ(m.positions(), 60u);
}

TEST(FeatureMap, VecPointsAtChannelVector) {
  FeatureMap<double> m(2, 2, 2, 3);
  m.values.at(1, 0, 1, 2) = 7.0;
  EXPECT_EQ(m.vec(m.position(1, 0, 1))[2], 7.0);
}

TEST(TensorFile, HeaderAndPayloadSizes) {
  // 4 magic + 1 dtype + 1 rank + 2 * 8 extents + 4 * 4 payload = 38.
  Tensor<float> t(Shape{2, 2});
  EXPECT_EQ(encode_tensor(t).size(), 38u);
  Tensor<double> d(Shape{3});
  EXPECT_EQ(encode_tensor(d).size(), 4u + 2u + 8u + 24u);
  // Smallest well-formed file: rank 1, one f64 scalar.
  Tensor<double> tiny(Shape{1});
  EXPECT_EQ(encode_tensor(tiny).size(), 4u + 2u + 8u + 8u);
}

TEST(TensorFile, RoundTripPreservesBits) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> val(-100.0, 100.0);
  std::uniform_int_distribution<std::size_t> rank_d(1, 4), ext_d(1, 5);
  const auto dir = std::filesystem::temp_directory_path() / "nlv_tensor_io_test";
  std::filesystem::create_directories(dir);
  for (int i = 0; i < 100; ++i) {
    Shape shape(rank_d(rng));
    for (auto& e : shape) e = ext_d(rng);
    const auto path = dir / ("t" + std::to_string(i) + ".nlt");
    if (i % 2 == 0) {
      Tensor<double> t(shape);
      for (std::size_t j = 0; j < t.numel(); ++j) t[j] = val(rng);
      write_tensor(t, path);
      EXPECT_EQ(read_tensor_as<double>(path), t);
    } else {
      Tensor<float> t(shape);
      for (std::size_t j = 0; j < t.numel(); ++j) t[j] = static_cast<float>(val(rng));
      write_tensor(t, path);
      EXPECT_EQ(read_tensor_as<float>(path), t);
    }
  }
  std::filesystem::remove_all(dir);
}

TensorIoStatus decode_status(std::string bytes) {
  try {
    decode_tensor(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  } catch (const TensorIoError& e) {
    return e.status();
  }
  return TensorIoStatus::ok;
}

TEST(TensorFile, DistinguishesMalformedInputs) {
  Tensor<float> t(Shape{2, 2}, std::vector<float>{1, 2, 3, 4});
  const std::string good = encode_tensor(t);
  EXPECT_EQ(decode_status(good), TensorIoStatus::ok);

  std::string bad = good;
  bad[3] = '0';  // "NLT0"
  EXPECT_EQ(decode_status(bad), TensorIoStatus::bad_magic);

  bad = good;
  bad[4] = 2;
  EXPECT_EQ(decode_status(bad), TensorIoStatus::bad_dtype);

  bad = good;
  bad[5] = 0;
  EXPECT_EQ(decode_status(bad), TensorIoStatus::bad_rank);
  bad[5] = 9;
  EXPECT_EQ(decode_status(bad), TensorIoStatus::bad_rank);

  bad = good;
  for (int i = 6; i < 14; ++i) bad[i] = 0;  // first extent = 0
  EXPECT_EQ(decode_status(bad), TensorIoStatus::bad_extent);

  EXPECT_EQ(decode_status(good.substr(0, 3)), TensorIoStatus::truncated);
  EXPECT_EQ(decode_status(good.substr(0, 10)), TensorIoStatus::truncated);
  EXPECT_EQ(decode_status(good.substr(0, good.size() - 1)), TensorIoStatus::truncated);
  EXPECT_EQ(decode_status(good + "x"), TensorIoStatus::trailing_data);
}

TEST(TensorFile, ExtentsAreLittleEndian) {
  Tensor<float> t(Shape{258});  // 0x0102
  const std::string bytes = encode_tensor(t);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 0x02);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 0x00);
}

TEST(TensorFile, TypedReadRejectsOtherDtype) {
  const auto dir = std::filesystem::temp_directory_path() / "nlv_tensor_io_test2";
  std::filesystem::create_directories(dir);
  const auto path = dir / "f32.nlt";
  write_tensor(Tensor<float>(Shape{3}), path);
  EXPECT_NO_THROW(read_tensor_as<float>(path));
  try {
    read_tensor_as<double>(path);
    FAIL() << "expected dtype rejection";
  } catch (const TensorIoError& e) {
    EXPECT_EQ(e.status(), TensorIoStatus::bad_dtype);
  }
  std::filesystem::remove_all(dir);
}

TEST(TensorFile, MissingFileIsIoError) {
  try {
    read_tensor("/nonexistent/nlv/nowhere.nlt");
    FAIL() << "expected io error";
  } catch (const TensorIoError& e) {
    EXPECT_EQ(e.status(), TensorIoStatus::io_error);
  }
}

}  // namespace
