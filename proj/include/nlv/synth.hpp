#pragma once

// Synthetic motion-direction task.  Each sample is a single-channel clip of
// a bright square translating along one of the compass directions over a
// noisy background; the label is the direction.
//
// Design notes, load-bearing for what models can and cannot learn here:
//   - The square's brightness combines a fixed margin, a per-sample
//     random offset, a linear ramp over the clip, and a spatial shading
//     field evaluated where the square sits.  Position history is thereby
//     written into appearance history: moving up the shading gradient
//     steepens the brightness rise, moving down it flattens it, and each
//     direction traces its own brightness slope.
//   - The random offset hides absolutes: a single frame's brightness pins
//     down neither how far along the clip it is nor the direction, since
//     a mid-bright square could be a late frame of a dim run or an early
//     frame of a bright one.
//   - The slope survives the offset only as a relation between frames:
//     subtracting the square's dimmest appearance from its brightest
//     recovers it exactly, and no per-frame statistic does.
//   - The direction axis is visible in any single frame (positions are
//     collinear); only the sign along the axis is order-coded.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

#include "nlv/scores.hpp"
#include "nlv/tensor.hpp"
#include "nlv/tensor_io.hpp"

namespace nlv {

struct SynthConfig {
  long num_classes = 8;  // compass directions, 4 or 8
  long frames = 8;
  long height = 16;
  long width = 16;
  long object_size = 4;
  double speed = 1.5;  // pixels per frame along each moving axis
  double noise = 0.1;
  long train_count = 500;
  long test_count = 200;
  std::uint64_t seed = 7;
};

// (dh, dw) unit steps, clockwise from north.  The 4-class variant keeps
// the axis-aligned entries.
inline std::pair<int, int> direction_step(long num_classes, long label) {
  static constexpr std::pair<int, int> kCompass8[] = {
      {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}};
  if (num_classes == 8) return kCompass8[label];
  return kCompass8[2 * label];
}

inline long motion_span(const SynthConfig& cfg) {
  return static_cast<long>(std::ceil((cfg.frames - 1) * cfg.speed));
}

inline void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.num_classes != 4 && cfg.num_classes != 8)
    throw std::invalid_argument("synth: num_classes must be 4 or 8");
  if (cfg.frames < 1 || cfg.height < 1 || cfg.width < 1)
    throw std::invalid_argument("synth: degenerate clip geometry");
  if (cfg.object_size < 1 || cfg.object_size > cfg.height || cfg.object_size > cfg.width)
    throw std::invalid_argument("synth: object does not fit the frame");
  if (cfg.speed <= 0)
    throw std::invalid_argument("synth: speed must be positive, otherwise the classes coincide");
  if (cfg.noise < 0) throw std::invalid_argument("synth: noise must be non-negative");
  if (cfg.train_count < 1 || cfg.test_count < 1)
    throw std::invalid_argument("synth: sample counts must be positive");
  const long span = motion_span(cfg);
  if (span > cfg.height - cfg.object_size || span > cfg.width - cfg.object_size)
    throw std::invalid_argument("synth: speed pushes the object out of frame");
}

struct LabeledVideos {
  std::vector<Tensor<double>> videos;  // each (T, H, W, 1)
  std::vector<long> labels;

  std::size_t size() const { return videos.size(); }
};

struct SynthData {
  LabeledVideos train;
  LabeledVideos test;
};

namespace detail {

inline long draw_start(int step, long limit, long span, std::mt19937_64& rng) {
  long lo = 0, hi = limit;
  if (step > 0) hi = limit - span;
  if (step < 0) lo = span;
  return std::uniform_int_distribution<long>(lo, hi)(rng);
}

// The square's brightness is a fixed margin plus a per-sample offset, an
// upward ramp over the clip, and a shading field evaluated at the
// square's center.  The 4:1 split between the axis gains keeps all eight
// per-direction slopes distinct, and the gains stay below the ramp gain
// so the slopes stay positive.  The swing is deliberately large against
// the margin: telling slopes apart should hinge on comparing a clip's
// dim and bright extremes, not on resolving fine increments.
constexpr double kRampGain = 12.0;
constexpr double kShadeGainH = 10.0;
constexpr double kShadeGainW = 2.5;
constexpr double kBaseBrightness = 10.0;

// Center of the square along one axis, mapped to [-0.5, 0.5].
inline double shade_coord(long origin, long object, long extent) {
  if (extent <= 1) return 0.0;
  const double center = static_cast<double>(origin) + 0.5 * (object - 1);
  return center / (extent - 1) - 0.5;
}

inline void generate_split(const SynthConfig& cfg, long count, std::mt19937_64& rng,
                           LabeledVideos& out) {
  std::uniform_int_distribution<long> label_d(0, cfg.num_classes - 1);
  std::uniform_real_distribution<double> offset_d(-2.5, 2.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const long span = motion_span(cfg);
  for (long s = 0; s < count; ++s) {
    const long label = label_d(rng);
    const auto [dh, dw] = direction_step(cfg.num_classes, label);
    const double offset = offset_d(rng);
    const long start_h = draw_start(dh, cfg.height - cfg.object_size, span, rng);
    const long start_w = draw_start(dw, cfg.width - cfg.object_size, span, rng);

    Tensor<double> video(Shape{static_cast<std::size_t>(cfg.frames),
                               static_cast<std::size_t>(cfg.height),
                               static_cast<std::size_t>(cfg.width), 1});
    for (long t = 0; t < cfg.frames; ++t) {
      const long top = start_h + std::llround(dh * cfg.speed * t);
      const long left = start_w + std::llround(dw * cfg.speed * t);
      const double ramp = cfg.frames > 1 ? static_cast<double>(t) / (cfg.frames - 1) : 1.0;
      const double shade = kShadeGainH * shade_coord(top, cfg.object_size, cfg.height) +
                           kShadeGainW * shade_coord(left, cfg.object_size, cfg.width);
      const double brightness = kBaseBrightness + offset + kRampGain * ramp + shade;
      for (long h = 0; h < cfg.height; ++h)
        for (long w = 0; w < cfg.width; ++w) {
          const bool inside = h >= top && h < top + cfg.object_size && w >= left &&
                              w < left + cfg.object_size;
          video.at(t, h, w, 0) = (inside ? brightness : 0.0) + cfg.noise * unit(rng);
        }
    }
    out.videos.push_back(std::move(video));
    out.labels.push_back(label);
  }
}

}  // namespace detail

// One generator stream produces train then test, so a seed pins the whole
// dataset bit for bit.
inline SynthData generate_synthetic(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  std::mt19937_64 rng(cfg.seed);
  SynthData data;
  detail::generate_split(cfg, cfg.train_count, rng, data.train);
  detail::generate_split(cfg, cfg.test_count, rng, data.test);
  return data;
}

inline void save_labeled_videos(const LabeledVideos& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.csv", std::ios::binary | std::ios::trunc);
  if (!labels) throw ScoreCsvError((dir / "labels.csv").string(), "cannot open for writing");
  labels << "id,label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "video_%05zu", i);
    write_tensor(data.videos[i], dir / (std::string(name) + ".nlt"));
    labels << name << "," << data.labels[i] << "\n";
  }
  if (!labels) throw ScoreCsvError((dir / "labels.csv").string(), "write failed");
}

inline LabeledVideos load_labeled_videos(const std::filesystem::path& dir) {
  std::ifstream labels(dir / "labels.csv", std::ios::binary);
  if (!labels) throw ScoreCsvError((dir / "labels.csv").string(), "cannot open");
  std::string line;
  if (!std::getline(labels, line) || (line != "id,label" && line != "id,label\r"))
    throw ScoreCsvError((dir / "labels.csv").string(), "bad header");
  LabeledVideos data;
  std::size_t lineno = 1;
  while (std::getline(labels, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ScoreCsvError((dir / "labels.csv").string(),
                          "line " + std::to_string(lineno) + ": missing label");
    const std::string id = line.substr(0, comma);
    std::size_t used = 0;
    long label = 0;
    try {
      label = std::stol(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw ScoreCsvError((dir / "labels.csv").string(),
                          "line " + std::to_string(lineno) + ": bad label");
    }
    data.videos.push_back(read_tensor_as<double>(dir / (id + ".nlt")));
    data.labels.push_back(label);
  }
  return data;
}

}  // namespace nlv
