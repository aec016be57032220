#include <gtest/gtest.h>

#include <random>

#include "nlv/mask.hpp"

namespace {

using namespace nlv;

TEST(Radius, ParsesAllThreeForms) {
  EXPECT_TRUE(Radius::parse("inf").is_infinite());
  EXPECT_EQ(Radius::parse("3"), Radius::absolute(3));
  EXPECT_EQ(Radius::parse("3/7"), Radius::fraction(3, 7));
  EXPECT_THROW(Radius::parse("abc"), std::invalid_argument);
  EXPECT_THROW(Radius::parse("-1"), std::invalid_argument);
  EXPECT_THROW(Radius::parse("3/0"), std::invalid_argument);
  EXPECT_THROW(Radius::parse("3/"), std::invalid_argument);
  EXPECT_THROW(Radius::parse(""), std::invalid_argument);
}

TEST(Radius, ConfigTextRoundTrips) {
  for (const char* text : {"inf", "0", "4", "3/7", "1/2"})
    EXPECT_EQ(Radius::parse(text).to_config(), text);
}

TEST(Radius, FractionsResolvePerExtent) {
  const Radius r = Radius::fraction(3, 7);
  EXPECT_EQ(r.resolve(28), 12u);
  EXPECT_EQ(r.resolve(7), 3u);
  EXPECT_EQ(r.resolve(14), 6u);
  EXPECT_EQ(r.resolve(10), 4u);  // floor(30/7)
  EXPECT_EQ(Radius::fraction(1, 2).resolve(16), 8u);
  EXPECT_EQ(Radius::fraction(1, 2).resolve(7), 3u);
  EXPECT_EQ(Radius::absolute(5).resolve(100), 5u);
  EXPECT_EQ(Radius::infinite().resolve(9), 9u);
}

TEST(AxisWindow, ClipsAtBothEnds) {
  EXPECT_EQ(axis_window(0, 2, 10).lo, 0u);
  EXPECT_EQ(axis_window(0, 2, 10).hi, 2u);
  EXPECT_EQ(axis_window(9, 2, 10).lo, 7u);
  EXPECT_EQ(axis_window(9, 2, 10).hi, 9u);
  EXPECT_EQ(axis_window(5, 2, 10).length(), 5u);
  EXPECT_EQ(axis_window(4, 100, 10).length(), 10u);
}

TEST(Mask, NeighbourSizesMatchBoxGeometry) {
  const GridDims dims{4, 4, 4};
  const ResolvedMask m = resolve_mask(
      MaskSpec{Radius::absolute(1), Radius::absolute(1), Radius::absolute(1)}, dims);
  EXPECT_EQ(neighbourhood_size(m, 0, 0, 0), 8u);    // corner
  EXPECT_EQ(neighbourhood_size(m, 1, 1, 1), 27u);   // interior
  EXPECT_EQ(neighbourhood_size(m, 0, 1, 1), 18u);   // face
}

TEST(Mask, ContainsIsSymmetricAndReflexive) {
  const GridDims dims{3, 4, 5};
  const ResolvedMask m = resolve_mask(
      MaskSpec{Radius::absolute(1), Radius::absolute(2), Radius::absolute(1)}, dims);
  const std::size_t n = dims.positions();
  for (std::size_t p = 0; p < n; ++p) {
    EXPECT_TRUE(mask_contains(m, p, p));
    for (std::size_t q = 0; q < n; ++q)
      EXPECT_EQ(mask_contains(m, p, q), mask_contains(m, q, p));
  }
  EXPECT_THROW(mask_contains(m, n, 0), std::invalid_argument);
}

TEST(Mask, TotalMatchesBruteForceCount) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> ext(1, 5);
  std::uniform_int_distribution<int> kind(0, 2), small(0, 3), num(1, 3), den(2, 7);
  auto random_radius = [&]() {
    switch (kind(rng)) {
      case 0: return Radius::infinite();
      case 1: return Radius::absolute(small(rng));
      default: return Radius::fraction(num(rng), den(rng));
    }
  };
  for (int rep = 0; rep < 25; ++rep) {
    const GridDims dims{ext(rng), ext(rng), ext(rng)};
    const MaskSpec spec{random_radius(), random_radius(), random_radius()};
    const ResolvedMask m = resolve_mask(spec, dims);
    unsigned long long brute = 0;
    for (std::size_t p = 0; p < dims.positions(); ++p)
      for (std::size_t q = 0; q < dims.positions(); ++q)
        if (mask_contains(m, p, q)) ++brute;
    EXPECT_EQ(neighbourhood_total(m), brute) << "rep " << rep;
  }
}

TEST(Mask, ZeroRadiiKeepOnlySelf) {
  const GridDims dims{2, 3, 2};
  const ResolvedMask m = resolve_mask(
      MaskSpec{Radius::absolute(0), Radius::absolute(0), Radius::absolute(0)}, dims);
  EXPECT_EQ(neighbourhood_total(m), dims.positions());
  for (std::size_t p = 0; p < dims.positions(); ++p)
    for (std::size_t q = 0; q < dims.positions(); ++q)
      EXPECT_EQ(mask_contains(m, p, q), p == q);
}

TEST(Mask, InfiniteCoversEverything) {
  const GridDims dims{3, 5, 4};
  const ResolvedMask m = resolve_mask(MaskSpec::all_infinite(), dims);
  EXPECT_TRUE(m.covers_everything());
  const std::size_t n = dims.positions();
  EXPECT_EQ(neighbourhood_total(m), static_cast<unsigned long long>(n) * n);
  EXPECT_TRUE(MaskSpec::all_infinite().is_all_infinite());
  EXPECT_FALSE((MaskSpec{Radius::absolute(2), Radius::infinite(), Radius::infinite()})
                   .is_all_infinite());
}

}  // namespace
