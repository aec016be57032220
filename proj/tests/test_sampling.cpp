#include "nlv/sampling.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace nlv;

TEST(ClipSampling, ShortVideoRepeatsLastFrame) {
  const auto frames = sample_consecutive(10, ClipStart::at(0));
  ASSERT_EQ(frames.size(), 32u);
  EXPECT_EQ(frames[0], 0);
  EXPECT_EQ(frames[1], 2);
  EXPECT_EQ(frames[4], 8);
  // Everything past the real frames clamps to the final one.
  for (std::size_t i = 5; i < frames.size(); ++i) EXPECT_EQ(frames[i], 9);
}

TEST(ClipSampling, CentredStartSplitsTheSlack) {
  const auto frames = sample_consecutive(200, ClipStart::centred());
  EXPECT_EQ(frames.front(), 68);  // (200 - 64) / 2
  EXPECT_EQ(frames.back(), 68 + 62);
}

TEST(ClipSampling, ExactWindowHasOneStart) {
  const auto fixed = sample_consecutive(64, ClipStart::at(0));
  const auto centred = sample_consecutive(64, ClipStart::centred());
  EXPECT_EQ(fixed, centred);
  EXPECT_EQ(fixed.front(), 0);
  EXPECT_EQ(fixed.back(), 62);
}

TEST(ClipSampling, FixedStartMustBeReachable) {
  EXPECT_NO_THROW(sample_consecutive(100, ClipStart::at(36)));
  EXPECT_THROW(sample_consecutive(100, ClipStart::at(37)), std::invalid_argument);
  EXPECT_THROW(sample_consecutive(100, ClipStart::at(-1)), std::invalid_argument);
  EXPECT_THROW(sample_consecutive(0, ClipStart::at(0)), std::invalid_argument);
}

TEST(ClipSampling, RandomStartIsSeedDeterministic) {
  const auto a = sample_consecutive(500, ClipStart::random(), 11);
  const auto b = sample_consecutive(500, ClipStart::random(), 11);
  EXPECT_EQ(a, b);

  std::set<long> starts;
  for (std::uint64_t seed = 0; seed < 32; ++seed)
    starts.insert(sample_consecutive(500, ClipStart::random(), seed).front());
  EXPECT_GT(starts.size(), 1u);
  for (long s : starts) {
    EXPECT_GE(s, 0);
    EXPECT_LE(s, 500 - 64);
  }
}

TEST(SegmentSampling, EvalPicksSegmentCentres) {
  EXPECT_EQ(tsn_segment_indices(7, 3, SampleMode::eval), (std::vector<long>{1, 3, 5}));
  EXPECT_EQ(tsn_segment_indices(10, 3, SampleMode::eval), (std::vector<long>{1, 5, 8}));
  EXPECT_EQ(tsn_segment_indices(6, 3, SampleMode::eval), (std::vector<long>{0, 2, 4}));
}

TEST(SegmentSampling, OneSegmentPerFrameIsTheIdentity) {
  const auto picks = tsn_segment_indices(5, 5, SampleMode::eval);
  EXPECT_EQ(picks, (std::vector<long>{0, 1, 2, 3, 4}));
}

TEST(SegmentSampling, TrainDrawsStayInTheirSegments) {
  // len 11, k 4: segment lengths 3,3,3,2 -> boundaries 0,3,6,9,11.
  const long bounds[] = {0, 3, 6, 9, 11};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto picks = tsn_segment_indices(11, 4, SampleMode::train, seed);
    ASSERT_EQ(picks.size(), 4u);
    for (int i = 0; i < 4; ++i) {
      EXPECT_GE(picks[i], bounds[i]);
      EXPECT_LT(picks[i], bounds[i + 1]);
    }
  }
  EXPECT_EQ(tsn_segment_indices(11, 4, SampleMode::train, 9),
            tsn_segment_indices(11, 4, SampleMode::train, 9));
}

TEST(SegmentSampling, SegmentCountMustFitTheVideo) {
  EXPECT_THROW(tsn_segment_indices(4, 5, SampleMode::eval), std::invalid_argument);
  EXPECT_THROW(tsn_segment_indices(4, 0, SampleMode::eval), std::invalid_argument);
  EXPECT_THROW(tsn_segment_indices(0, 1, SampleMode::eval), std::invalid_argument);
  EXPECT_NO_THROW(tsn_segment_indices(4, 4, SampleMode::eval));
}
