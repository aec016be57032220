// nlv: driver for the video attention library.  Subcommands verify the fast
// paths against reference implementations (oracle), check analytic gradients
// with central differences (gradcheck), measure the cost of restricting
// attention (bench), emit synthetic datasets (synth), train and compare block
// variants (experiment), combine score tables (fuse) and grow 2D kernels
// along time (inflate).
//
// Configuration is one flat key = value namespace shared by all subcommands:
// values come from --config <file>, then from --<key> <value> flags in
// command line order.  Exit codes are stable: 0 success, 1 a verification
// threshold was missed, 2 a configuration or usage problem, 3 an I/O problem.
// Primary outputs are deterministic for a fixed config and seed; only timing
// columns vary between runs.

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "nlv/config.hpp"
#include "nlv/conv.hpp"
#include "nlv/gradcheck.hpp"
#include "nlv/mask.hpp"
#include "nlv/model.hpp"
#include "nlv/nonlocal.hpp"
#include "nlv/reference.hpp"
#include "nlv/relation.hpp"
#include "nlv/scores.hpp"
#include "nlv/synth.hpp"
#include "nlv/tensor.hpp"
#include "nlv/tensor_io.hpp"
#include "nlv/tensor_ops.hpp"
#include "nlv/train.hpp"

namespace {

using namespace nlv;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Subcommand {
  const char* name;
  const char* args;
  const char* what;
};

constexpr Subcommand kSubcommands[] = {
    {"gradcheck", "", "compare analytic gradients with central differences"},
    {"oracle", "", "compare fast forward paths with reference implementations"},
    {"bench", "", "count and time dense versus masked attention"},
    {"synth", "", "write a synthetic moving-square dataset"},
    {"experiment", "", "train the block variants and tabulate test accuracy"},
    {"fuse", "<scores.csv>...", "weighted fusion of probability score tables"},
    {"inflate", "<kernel2d.nlt> <t> <kernel3d.nlt>", "inflate a 2D kernel along time"},
};

void print_usage(std::FILE* to) {
  std::fprintf(to, "usage: nlv <subcommand> [--config <file>] [--<key> <value>]... [args]\n\n");
  std::fprintf(to, "subcommands:\n");
  for (const Subcommand& s : kSubcommands)
    std::fprintf(to, "  %-11s %-36s %s\n", s.name, s.args, s.what);
  std::fprintf(to, "\nnlv <subcommand> --help lists every config key with its default.\n");
}

void print_keys() {
  std::printf("config keys (flag form --<key> <value>, file form key = value):\n");
  for (const ConfigKey& k : config_registry()) {
    std::printf("  %-13s %-10s %s\n", k.name.c_str(),
                k.def.empty() ? "\"\"" : k.def.c_str(), k.help.c_str());
  }
}

// Splits argv into config assignments and positionals.  --help prints the
// subcommand line plus the full key table and exits early via the return.
struct ParsedArgs {
  RunConfig cfg;
  std::vector<std::string> positionals;
  bool help = false;
};

ParsedArgs parse_args(const Subcommand& sub, int argc, char** argv) {
  ParsedArgs out;
  std::vector<std::pair<std::string, std::string>> assignments;
  std::string config_path;
  for (int i = 0; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--help" || arg == "-h") {
      out.help = true;
      continue;
    }
    if (arg.rfind("--", 0) != 0) {
      out.positionals.push_back(arg);
      continue;
    }
    std::string key = arg.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= argc) throw UsageError("flag --" + key + " wants a value");
      value = argv[++i];
    }
    if (key == "config")
      config_path = value;
    else
      assignments.emplace_back(key, value);
  }
  if (out.help) {
    std::printf("nlv %s %s\n  %s\n\n", sub.name, sub.args, sub.what);
    print_keys();
    return out;
  }
  if (!config_path.empty()) out.cfg.load_file(config_path);
  for (const auto& [key, value] : assignments) out.cfg.set(key, value);
  return out;
}

void require_no_positionals(const Subcommand& sub, const ParsedArgs& args) {
  if (!args.positionals.empty())
    throw UsageError(std::string("nlv ") + sub.name + " takes no positional arguments, got: " +
                     args.positionals.front());
}

std::filesystem::path out_dir(const RunConfig& cfg) {
  std::filesystem::path dir = cfg.get_string("out");
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------- gradcheck

int run_gradcheck(const RunConfig& cfg) {
  const long seeds = cfg.get_long("gc_seeds");
  if (seeds < 1) throw ConfigError("gc_seeds must be positive");
  const double eps = cfg.get_double("gc_eps");
  const double tol = cfg.get_double("gc_tol");
  if (tol < 0 || !std::isfinite(tol)) throw ConfigError("gc_tol must be finite and non-negative");
  const std::uint64_t base = cfg.get_u64("seed");

  // A clipped absolute window so the masked case exercises renormalisation.
  const MaskSpec window{Radius::absolute(1), Radius::absolute(1), Radius::absolute(2)};
  struct Check {
    const char* name;
    double (*run)(std::uint64_t, double, const MaskSpec&);
  };
  const Check checks[] = {
      {"linear", [](std::uint64_t s, double, const MaskSpec&) { return grad_check_linear(s); }},
      {"softmax",
       [](std::uint64_t s, double e, const MaskSpec&) { return grad_check_softmax(s, e); }},
      {"cross_entropy",
       [](std::uint64_t s, double e, const MaskSpec&) { return grad_check_cross_entropy(s, e); }},
      {"conv3d",
       [](std::uint64_t s, double e, const MaskSpec&) { return grad_check_conv3d(s, e); }},
      {"nonlocal",
       [](std::uint64_t s, double e, const MaskSpec&) {
         return grad_check_nonlocal(s, MaskSpec::all_infinite(), e);
       }},
      {"mask_nonlocal",
       [](std::uint64_t s, double e, const MaskSpec& m) { return grad_check_nonlocal(s, m, e); }},
      {"relation",
       [](std::uint64_t s, double e, const MaskSpec&) { return grad_check_relation(s, e); }},
  };

  bool all_ok = true;
  for (const Check& check : checks) {
    double worst = 0;
    for (long i = 1; i <= seeds; ++i)
      worst = std::max(worst, check.run(base + static_cast<std::uint64_t>(i), eps, window));
    const bool ok = worst <= tol;
    all_ok = all_ok && ok;
    std::printf("%-14s worst rel error %11.4e   %s\n", check.name, worst, ok ? "ok" : "FAIL");
  }
  std::printf("gradcheck: %s  (%ld seeds per op, step %g, tolerance %g)\n",
              all_ok ? "PASS" : "FAIL", seeds, eps, tol);
  return all_ok ? 0 : 1;
}

// ------------------------------------------------------------------- oracle

struct OracleStat {
  const char* name;
  double worst = 0;
  long instances = 0;
};

double max_abs_diff(const FeatureMap<double>& a, const FeatureMap<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.values.numel(); ++i)
    worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
  return worst;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

FeatureMap<double> random_map(std::size_t t, std::size_t h, std::size_t w, std::size_t c,
                              std::mt19937_64& rng) {
  FeatureMap<double> x(t, h, w, c);
  fill_uniform(x.values, -1.0, 1.0, rng);
  return x;
}

Radius draw_radius(std::mt19937_64& rng) {
  switch (rng() % 3) {
    case 0: return Radius::infinite();
    case 1: return Radius::absolute(static_cast<long>(rng() % 4));
    default: {
      const long den = 2 + static_cast<long>(rng() % 6);
      const long num = 1 + static_cast<long>(rng() % (den - 1));
      return Radius::fraction(num, den);
    }
  }
}

int run_oracle(const RunConfig& cfg) {
  const long instances = cfg.get_long("or_instances");
  if (instances < 1) throw ConfigError("or_instances must be positive");
  const long max_dim = cfg.get_long("or_max_dim");
  const long max_c = cfg.get_long("or_max_channels");
  if (max_dim < 1 || max_c < 1) throw ConfigError("oracle sweep dimensions must be positive");
  const double tol = cfg.get_double("or_tol");
  const bool corrupt = cfg.get_bool("or_corrupt");
  const bool fixed_mask = cfg.get_string("or_mask") == "config";
  if (!fixed_mask && cfg.get_string("or_mask") != "random")
    throw ConfigError("or_mask must be random or config");
  const MaskSpec cfg_mask{cfg.get_radius("delta_t"), cfg.get_radius("delta_h"),
                          cfg.get_radius("delta_w")};
  const std::uint64_t base = cfg.get_u64("seed");

  auto dim = [&](std::mt19937_64& rng, long lo) {
    const long hi = std::max(lo, max_dim);
    return static_cast<std::size_t>(lo + static_cast<long>(rng() % (hi - lo + 1)));
  };

  OracleStat conv{"conv3d"}, dense{"nonlocal"}, stream{"nonlocal_stream"},
      identity{"identity_window"}, rel{"relation"};

  for (long i = 0; i < instances; ++i) {
    // conv3d against the definition-style loop nest.
    {
      std::mt19937_64 rng(base + 1000003ull * 1 + static_cast<std::uint64_t>(i));
      const std::size_t t = dim(rng, 1), h = dim(rng, 1), w = dim(rng, 1);
      const std::size_t cin = 1 + rng() % 4, cout = 1 + rng() % 4;
      const ConvPad pad{static_cast<long>(rng() % 2), static_cast<long>(rng() % 2),
                        static_cast<long>(rng() % 2)};
      const std::size_t kt = std::min<std::size_t>(1 + rng() % 3, t + 2 * pad.t);
      const std::size_t kh = std::min<std::size_t>(1 + rng() % 3, h + 2 * pad.h);
      const std::size_t kw = std::min<std::size_t>(1 + rng() % 3, w + 2 * pad.w);
      Tensor<double> x(Shape{cin, t, h, w});
      fill_uniform(x, -1.0, 1.0, rng);
      Kernel3D<double> k(Tensor<double>(Shape{cout, cin, kt, kh, kw}));
      fill_uniform(k.weights, -1.0, 1.0, rng);
      Tensor<double> fast = conv3d(x, k, pad);
      if (corrupt && i == 0) fast[0] = -fast[0];
      conv.worst = std::max(conv.worst, max_abs_diff(fast, ref::conv3d(x, k, pad)));
      ++conv.instances;
    }

    // Attention: the cached matrix path and the streamed row path against
    // the same reference, under a fresh mask each time.
    {
      std::mt19937_64 rng(base + 1000003ull * 2 + static_cast<std::uint64_t>(i));
      const std::size_t t = dim(rng, 1), h = dim(rng, 1), w = dim(rng, 1);
      const std::size_t c = 1 + rng() % static_cast<std::size_t>(max_c);
      const std::size_t cp = 1 + rng() % c;
      FeatureMap<double> x = random_map(t, h, w, c, rng);
      ProjectionParams<double> params = ProjectionParams<double>::random_init(c, cp, rng());
      fill_uniform(params.w_z, -1.0, 1.0, rng);
      const MaskSpec mask =
          fixed_mask ? cfg_mask : MaskSpec{draw_radius(rng), draw_radius(rng), draw_radius(rng)};
      const FeatureMap<double> want = ref::nonlocal(x, params, mask);

      FeatureMap<double> got = nonlocal_forward(x, params, mask).z;
      if (corrupt && i == 0) got.values[0] = -got.values[0];
      dense.worst = std::max(dense.worst, max_abs_diff(got, want));
      ++dense.instances;

      FeatureMap<double> streamed = nonlocal_apply(x, params, mask);
      if (corrupt && i == 0) streamed.values[0] = -streamed.values[0];
      stream.worst = std::max(stream.worst, max_abs_diff(streamed, want));
      ++stream.instances;
    }

    // Zero radii shrink every neighbourhood to the position itself, so the
    // attention matrix must be exactly the identity.
    {
      std::mt19937_64 rng(base + 1000003ull * 3 + static_cast<std::uint64_t>(i));
      const std::size_t t = dim(rng, 1), h = dim(rng, 1), w = dim(rng, 1);
      const std::size_t c = 1 + rng() % static_cast<std::size_t>(max_c);
      FeatureMap<double> x = random_map(t, h, w, c, rng);
      ProjectionParams<double> params =
          ProjectionParams<double>::random_init(c, 1 + rng() % c, rng());
      const MaskSpec self{Radius::absolute(0), Radius::absolute(0), Radius::absolute(0)};
      Tensor<double> attn = nonlocal_forward(x, params, self).cache.attn;
      if (corrupt && i == 0) attn[0] = -attn[0];
      double worst = 0;
      const std::size_t n = x.positions();
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = 0; q < n; ++q)
          worst = std::max(worst, std::abs(attn.at(p, q) - (p == q ? 1.0 : 0.0)));
      identity.worst = std::max(identity.worst, worst);
      ++identity.instances;
    }

    // Relation block against the patch-at-a-time reference.  Radii need
    // extents of at least 3, so those axes start there.
    {
      std::mt19937_64 rng(base + 1000003ull * 4 + static_cast<std::uint64_t>(i));
      const std::size_t t = dim(rng, 3), h = dim(rng, 3), w = dim(rng, 3);
      const std::size_t c = 1 + rng() % static_cast<std::size_t>(max_c);
      const std::size_t cp = 1 + rng() % c;
      auto radii = [&](std::size_t extent) {
        const long r0 = 1 + static_cast<long>(rng() % ((extent - 1) / 2));
        const long r1 = static_cast<long>(rng() % static_cast<std::uint64_t>(r0));
        return std::pair<long, long>{r0, r1};
      };
      const auto [t0, t1] = radii(t);
      const auto [h0, h1] = radii(h);
      const auto [w0, w1] = radii(w);
      RelationNetParams<double> params = RelationNetParams<double>::random_init(
          c, cp, t0, h0, w0, t1, h1, w1, rng(), 1 + rng() % 6);
      fill_uniform(params.layer2, -1.0, 1.0, rng);
      fill_uniform(params.w_z, -1.0, 1.0, rng);
      params.normalize_relations = (rng() & 1) != 0;
      FeatureMap<double> x = random_map(t, h, w, c, rng);
      FeatureMap<double> got = relation_forward(x, params).z;
      if (corrupt && i == 0) got.values[0] = -got.values[0];
      rel.worst = std::max(rel.worst, max_abs_diff(got, ref::relation(x, params)));
      ++rel.instances;
    }
  }

  bool all_ok = true;
  for (const OracleStat* s : {&conv, &dense, &stream, &identity, &rel}) {
    const bool ok = s->worst <= tol;
    all_ok = all_ok && ok;
    std::printf("%-16s %5ld instances   max |diff| %.4e   %s\n", s->name, s->instances, s->worst,
                ok ? "ok" : "FAIL");
  }
  std::printf("oracle: %s  (tolerance %g)\n", all_ok ? "PASS" : "FAIL", tol);
  return all_ok ? 0 : 1;
}

// -------------------------------------------------------------------- bench

double median_ms(std::vector<double>& samples) {
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

int run_bench(const RunConfig& cfg) {
  const std::size_t t = static_cast<std::size_t>(cfg.get_long("bench_t"));
  const std::size_t h = static_cast<std::size_t>(cfg.get_long("bench_h"));
  const std::size_t w = static_cast<std::size_t>(cfg.get_long("bench_w"));
  const std::size_t c = static_cast<std::size_t>(cfg.get_long("bench_channels"));
  const std::size_t cp = static_cast<std::size_t>(cfg.get_long("bench_bottleneck"));
  if (t < 1 || h < 1 || w < 1 || c < 1 || cp < 1 || cp > c)
    throw ConfigError("bench geometry wants positive extents and bottleneck <= channels");
  const long runs = cfg.get_long("bench_runs");
  if (runs < 1) throw ConfigError("bench_runs must be positive");
  const std::uint64_t seed = cfg.get_u64("seed");

  std::mt19937_64 rng(seed);
  FeatureMap<double> x = random_map(t, h, w, c, rng);
  ProjectionParams<double> params = ProjectionParams<double>::random_init(c, cp, seed + 1);
  fill_uniform(params.w_z, -1.0, 1.0, rng);
  const GridDims dims{t, h, w};

  // The checksum keeps the optimiser from discarding timed work.
  double sink = 0;
  auto time_ms = [&](const MaskSpec& mask) {
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(runs));
    for (long r = 0; r < runs; ++r) {
      const auto begin = std::chrono::steady_clock::now();
      FeatureMap<double> z = nonlocal_apply(x, params, mask);
      const auto end = std::chrono::steady_clock::now();
      sink += z.values[z.values.numel() - 1];
      samples.push_back(std::chrono::duration<double, std::milli>(end - begin).count());
    }
    return median_ms(samples);
  };

  struct Setting {
    const char* label;
    MaskSpec mask;
  };
  const Setting settings[] = {
      {"t=inf h=inf w=inf", MaskSpec::all_infinite()},
      {"t=inf h=3/7 w=3/7",
       {Radius::infinite(), Radius::fraction(3, 7), Radius::fraction(3, 7)}},
      {"t=inf h=3/28 w=3/28",
       {Radius::infinite(), Radius::fraction(3, 28), Radius::fraction(3, 28)}},
      {"t=1/2 h=3/7 w=3/7",
       {Radius::fraction(1, 2), Radius::fraction(3, 7), Radius::fraction(3, 7)}},
      {"t=1/2 h=3/28 w=3/28",
       {Radius::fraction(1, 2), Radius::fraction(3, 28), Radius::fraction(3, 28)}},
  };

  std::printf("# nlv bench: clip %zux%zux%zu, channels %zu, bottleneck %zu, median of %ld runs\n",
              t, h, w, c, cp, runs);
  std::printf("# compiler %s, %u hardware threads\n", __VERSION__,
              std::thread::hardware_concurrency());
  std::printf("setting,dense_flops,masked_flops,ratio,dense_ms,masked_ms\n");

  const double dense_ms = time_ms(MaskSpec::all_infinite());
  for (const Setting& s : settings) {
    const FlopCount f = attention_flops(dims, c, cp, s.mask);
    const double masked_ms = time_ms(s.mask);
    std::printf("%s,%llu,%llu,%s,%.3f,%.3f\n", s.label, f.dense, f.masked,
                format_score(f.pairwise_ratio).c_str(), dense_ms, masked_ms);
  }
  if (!std::isfinite(sink)) std::fprintf(stderr, "bench checksum overflowed\n");
  return 0;
}

// -------------------------------------------------------------------- synth

SynthConfig synth_config(const RunConfig& cfg) {
  SynthConfig sc;
  sc.num_classes = cfg.get_long("classes");
  sc.frames = cfg.get_long("frames");
  sc.height = cfg.get_long("height");
  sc.width = cfg.get_long("width");
  sc.object_size = cfg.get_long("object_size");
  sc.speed = cfg.get_double("speed");
  sc.noise = cfg.get_double("noise");
  sc.train_count = cfg.get_long("train_count");
  sc.test_count = cfg.get_long("test_count");
  sc.seed = cfg.get_u64("seed");
  return sc;
}

int run_synth(const RunConfig& cfg) {
  const SynthConfig sc = synth_config(cfg);
  const SynthData data = generate_synthetic(sc);
  const std::filesystem::path dir = out_dir(cfg);
  save_labeled_videos(data.train, dir / "train");
  save_labeled_videos(data.test, dir / "test");
  std::printf("synth: %zu train / %zu test videos, %ld classes, clips %ldx%ldx%ld\n",
              data.train.size(), data.test.size(), sc.num_classes, sc.frames, sc.height,
              sc.width);
  std::printf("synth: wrote %s and %s\n", (dir / "train").c_str(), (dir / "test").c_str());
  return 0;
}

// --------------------------------------------------------------- experiment

ToyModelConfig model_config(const RunConfig& cfg, BlockKind kind) {
  ToyModelConfig mc;
  mc.num_classes = cfg.get_long("classes");
  mc.feat_channels = cfg.get_long("channels");
  mc.stem_kernel = cfg.get_long("stem_kernel");
  mc.bottleneck = cfg.get_long("bottleneck");
  mc.block = kind;
  mc.mask = MaskSpec{cfg.get_radius("delta_t"), cfg.get_radius("delta_h"),
                     cfg.get_radius("delta_w")};
  mc.rel_t0 = cfg.get_long("rel_t0");
  mc.rel_h0 = cfg.get_long("rel_h0");
  mc.rel_w0 = cfg.get_long("rel_w0");
  mc.rel_t1 = cfg.get_long("rel_t1");
  mc.rel_h1 = cfg.get_long("rel_h1");
  mc.rel_w1 = cfg.get_long("rel_w1");
  mc.rel_hidden = cfg.get_long("rel_hidden");
  mc.rel_normalize = cfg.get_bool("rel_normalize");
  return mc;
}

SGDConfig sgd_config(const RunConfig& cfg) {
  SGDConfig sgd;
  sgd.lr = cfg.get_double("lr");
  sgd.momentum = cfg.get_double("momentum");
  sgd.epochs = cfg.get_long("epochs");
  sgd.batch = cfg.get_long("batch");
  sgd.seed = cfg.get_u64("seed");
  sgd.lr_decay = cfg.get_double("lr_decay");
  sgd.decay_epochs = cfg.get_long_list("decay_epochs");
  sgd.grad_clip = cfg.get_double("grad_clip");
  return sgd;
}

int run_experiment(const RunConfig& cfg) {
  const std::vector<std::string> variant_names = cfg.get_string_list("variants");
  if (variant_names.empty()) throw ConfigError("variants must name at least one block kind");
  std::vector<BlockKind> kinds;
  for (const std::string& name : variant_names) kinds.push_back(block_kind_from_string(name));
  const long threads = cfg.get_long("threads");
  const double head_scale = cfg.get_double("head_scale");
  if (head_scale < 0 || !std::isfinite(head_scale))
    throw ConfigError("head_scale must be finite and non-negative");
  const std::uint64_t seed = cfg.get_u64("seed");
  const std::filesystem::path dir = out_dir(cfg);

  const SynthConfig sc = synth_config(cfg);
  std::fprintf(stderr, "generating %ld train / %ld test videos\n", sc.train_count,
               sc.test_count);
  const SynthData data = generate_synthetic(sc);

  struct Outcome {
    std::string name;
    double top1 = 0;
    bool diverged = false;
  };
  std::vector<Outcome> outcomes;

  for (std::size_t vi = 0; vi < kinds.size(); ++vi) {
    Outcome result{variant_names[vi]};
    // One model seed for every variant: all runs start from the same stem
    // draw and the same classifier draw, so only the inserted block differs.
    ToyModel model = make_toy_model(model_config(cfg, kinds[vi]), seed + 1);
    if (head_scale > 0) {
      std::mt19937_64 head_rng(seed + 2);
      fill_uniform(model.classifier_w, -head_scale, head_scale, head_rng);
    }
    const auto begin = std::chrono::steady_clock::now();
    try {
      const std::vector<TraceRow> trace =
          train_loop(model, data.train, data.test, sgd_config(cfg), threads);
      const std::filesystem::path vdir = dir / result.name;
      std::filesystem::create_directories(vdir / "model");
      write_trace_csv(trace, (vdir / "trace.csv").string());
      const ScoreTable scores = score_dataset(model, data.test, "video_", threads);
      write_score_csv(scores, vdir / "scores.csv");
      save_model(model, (vdir / "model").string());
      result.top1 = topk_accuracy(scores, 1);
    } catch (const TrainingDiverged& e) {
      std::fprintf(stderr, "%s: %s\n", result.name.c_str(), e.what());
      result.diverged = true;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin)
                            .count();
    std::fprintf(stderr, "%s finished in %.1fs\n", result.name.c_str(), secs);
    outcomes.push_back(std::move(result));
  }

  std::ofstream summary(dir / "summary.csv", std::ios::binary | std::ios::trunc);
  if (!summary) throw ScoreCsvError((dir / "summary.csv").string(), "cannot open for writing");
  summary << "variant,top1\n";
  std::printf("%-14s top1\n", "variant");
  for (const Outcome& o : outcomes) {
    const std::string shown = o.diverged ? "diverged" : format_score(o.top1);
    summary << o.name << ',' << shown << '\n';
    std::printf("%-14s %s\n", o.name.c_str(), shown.c_str());
  }
  if (!summary) throw ScoreCsvError((dir / "summary.csv").string(), "write failed");
  return 0;
}

// --------------------------------------------------------------------- fuse

std::map<std::string, long> read_label_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScoreCsvError(path.string(), "cannot open");
  std::map<std::string, long> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line == "id,label")) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ScoreCsvError(path.string(), "line " + std::to_string(lineno) + ": missing label");
    try {
      std::size_t used = 0;
      const long label = std::stol(line.substr(comma + 1), &used);
      labels[line.substr(0, comma)] = label;
    } catch (const std::exception&) {
      throw ScoreCsvError(path.string(), "line " + std::to_string(lineno) + ": bad label");
    }
  }
  return labels;
}

int run_fuse(const RunConfig& cfg, const std::vector<std::string>& paths) {
  if (paths.empty()) throw UsageError("nlv fuse wants at least one score CSV");
  std::vector<ScoreTable> tables;
  for (const std::string& path : paths) tables.push_back(read_score_csv(path));
  ScoreTable fused = fuse_scores(tables, cfg.get_double_list("fuse_weights"));

  const std::string labels_path = cfg.get_string("labels");
  if (!labels_path.empty()) {
    const std::map<std::string, long> labels = read_label_csv(labels_path);
    for (std::size_t i = 0; i < fused.rows(); ++i) {
      const auto it = labels.find(fused.ids[i]);
      if (it == labels.end())
        throw std::invalid_argument("labels file missing id " + fused.ids[i]);
      fused.labels[i] = it->second;
    }
    fused.validate();
  }

  const std::filesystem::path dir = out_dir(cfg);
  write_score_csv(fused, dir / "fused.csv");
  std::printf("fused %zu tables, %zu rows, %zu classes -> %s\n", tables.size(), fused.rows(),
              fused.classes(), (dir / "fused.csv").c_str());

  const bool labelled =
      std::all_of(fused.labels.begin(), fused.labels.end(), [](long l) { return l >= 0; });
  if (labelled) {
    std::printf("top1 %s\n", format_score(topk_accuracy(fused, 1)).c_str());
    const std::size_t k = std::min<std::size_t>(5, fused.classes());
    std::printf("top%zu %s\n", k, format_score(topk_accuracy(fused, k)).c_str());
  } else {
    std::printf("labels incomplete, accuracy not reported\n");
  }
  return 0;
}

// ------------------------------------------------------------------ inflate

int run_inflate(const std::vector<std::string>& args) {
  if (args.size() != 3)
    throw UsageError("nlv inflate wants <kernel2d.nlt> <t> <kernel3d.nlt>");
  long t = 0;
  try {
    std::size_t used = 0;
    t = std::stol(args[1], &used);
    if (used != args[1].size()) throw std::invalid_argument(args[1]);
  } catch (const std::exception&) {
    throw UsageError("nlv inflate: temporal extent must be an integer, got " + args[1]);
  }
  if (t < 1) throw UsageError("nlv inflate: temporal extent must be positive");

  Tensor<double> weights = read_tensor_as<double>(args[0]);
  if (weights.rank() != 4)
    throw std::invalid_argument("inflate: expected a rank 4 kernel (out, in, k, k), got rank " +
                                std::to_string(weights.rank()));
  Kernel2D<double> k2(std::move(weights));
  Kernel3D<double> k3 = inflate_kernel(k2, static_cast<std::size_t>(t));
  write_tensor(k3.weights, args[2]);
  std::printf("inflated (%zu, %zu, %zu, %zu) -> (%zu, %zu, %zu, %zu, %zu): %s\n",
              k2.weights.extent(0), k2.weights.extent(1), k2.weights.extent(2),
              k2.weights.extent(3), k3.weights.extent(0), k3.weights.extent(1),
              k3.weights.extent(2), k3.weights.extent(3), k3.weights.extent(4),
              args[2].c_str());
  return 0;
}

int dispatch(int argc, char** argv) {
  if (argc < 2) {
    print_usage(stderr);
    return 2;
  }
  const std::string name = argv[1];
  if (name == "--help" || name == "-h" || name == "help") {
    print_usage(stdout);
    return 0;
  }
  const Subcommand* sub = nullptr;
  for (const Subcommand& s : kSubcommands)
    if (name == s.name) sub = &s;
  if (!sub) {
    std::fprintf(stderr, "nlv: unknown subcommand: %s\n\n", name.c_str());
    print_usage(stderr);
    return 2;
  }

  const ParsedArgs args = parse_args(*sub, argc - 2, argv + 2);
  if (args.help) return 0;

  if (name == "fuse") return run_fuse(args.cfg, args.positionals);
  if (name == "inflate") return run_inflate(args.positionals);
  require_no_positionals(*sub, args);
  if (name == "gradcheck") return run_gradcheck(args.cfg);
  if (name == "oracle") return run_oracle(args.cfg);
  if (name == "bench") return run_bench(args.cfg);
  if (name == "synth") return run_synth(args.cfg);
  return run_experiment(args.cfg);
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Attention matrices are tens of megabytes and are reallocated per sample;
  // keeping them on the heap instead of fresh mmaps avoids refaulting the
  // pages every training step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
#endif
  try {
    return dispatch(argc, argv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "nlv: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "nlv: %s\n", e.what());
    return 2;
  } catch (const TensorIoError& e) {
    std::fprintf(stderr, "nlv: %s\n", e.what());
    return 3;
  } catch (const ScoreCsvError& e) {
    std::fprintf(stderr, "nlv: %s\n", e.what());
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "nlv: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "nlv: %s\n", e.what());
    return 2;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "nlv: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "nlv: internal error: %s\n", e.what());
    return 3;
  }
}
