#pragma once

// Frame selection for clips and for segment-based evaluation.
//
// A clip is built by taking a 64-frame consecutive window and keeping every
// second frame, so one clip covers 32 frames' worth of indices.  Videos
// shorter than the window are padded by repeating their last frame.
//
// Segment sampling splits a video into k near-equal pieces (the remainder
// goes to the leading segments) and picks one frame per piece: the centre
// in evaluation mode, a uniform draw in training mode.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace nlv {

inline constexpr long kClipWindow = 64;
inline constexpr long kClipStride = 2;

struct ClipStart {
  enum class Mode { fixed, random, centred };

  Mode mode = Mode::centred;
  long index = 0;  // only for fixed

  static ClipStart at(long index) { return ClipStart{Mode::fixed, index}; }
  static ClipStart random() { return ClipStart{Mode::random, 0}; }
  static ClipStart centred() { return ClipStart{Mode::centred, 0}; }
};

// Frame indices of one clip: kClipWindow consecutive frames starting at the
// resolved start, every kClipStride-th kept, clamped to the last real frame.
inline std::vector<long> sample_consecutive(long video_len, ClipStart start,
                                            std::uint64_t seed = 0) {
  if (video_len < 1) throw std::invalid_argument("sample_consecutive: empty video");
  const long max_start = video_len > kClipWindow ? video_len - kClipWindow : 0;
  long s = 0;
  switch (start.mode) {
    case ClipStart::Mode::fixed:
      if (start.index < 0 || start.index > max_start)
        throw std::invalid_argument("sample_consecutive: start index out of range");
      s = start.index;
      break;
    case ClipStart::Mode::random: {
      std::mt19937_64 rng(seed);
      s = std::uniform_int_distribution<long>(0, max_start)(rng);
      break;
    }
    case ClipStart::Mode::centred:
      s = max_start / 2;
      break;
  }
  std::vector<long> frames;
  frames.reserve(kClipWindow / kClipStride);
  for (long w = 0; w < kClipWindow; w += kClipStride) {
    const long f = s + w;
    frames.push_back(f < video_len ? f : video_len - 1);
  }
  return frames;
}

enum class SampleMode { train, eval };

inline std::vector<long> tsn_segment_indices(long video_len, long k_segments, SampleMode mode,
                                             std::uint64_t seed = 0) {
  if (video_len < 1) throw std::invalid_argument("tsn_segment_indices: empty video");
  if (k_segments < 1 || k_segments > video_len)
    throw std::invalid_argument("tsn_segment_indices: segment count out of range");
  const long base = video_len / k_segments;
  const long rem = video_len % k_segments;
  std::mt19937_64 rng(seed);
  std::vector<long> picks;
  picks.reserve(k_segments);
  long start = 0;
  for (long i = 0; i < k_segments; ++i) {
    const long len = base + (i < rem ? 1 : 0);
    const long end = start + len;
    if (mode == SampleMode::eval) {
      picks.push_back((start + end - 1) / 2);
    } else {
      picks.push_back(std::uniform_int_distribution<long>(start, end - 1)(rng));
    }
    start = end;
  }
  return picks;
}

}  // namespace nlv
