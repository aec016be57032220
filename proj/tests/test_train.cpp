#include "nlv/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nlv;

namespace {

SynthConfig tiny_data_config() {
  SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.frames = 3;
  cfg.height = 8;
  cfg.width = 8;
  cfg.object_size = 2;
  cfg.speed = 1.5;  // span 3 fits 8 - 2
  cfg.noise = 0.05;
  cfg.train_count = 16;
  cfg.test_count = 8;
  cfg.seed = 11;
  return cfg;
}

ToyModelConfig tiny_model_config() {
  ToyModelConfig cfg;
  cfg.num_classes = 4;
  cfg.feat_channels = 4;
  cfg.stem_kernel = 3;
  cfg.bottleneck = 2;
  cfg.block = BlockKind::none;
  return cfg;
}

bool models_equal(ToyModel& a, ToyModel& b) {
  auto pa = model_params(a);
  auto pb = model_params(b);
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(*pa[i].second == *pb[i].second)) return false;
  return true;
}

}  // namespace

TEST(Sgd, MomentumAccumulatesAcrossSteps) {
  ToyModel m = make_toy_model(tiny_model_config(), 5);
  ToyModel start = m;
  ToyModel grads = zero_like(m);
  ToyModel velocity = zero_like(m);
  for (auto& [name, t] : model_params(grads)) t->fill(2.0);

  // v = g, p -= lr v; then v = 0.9 g + g, p -= lr v: total lr (1 + 1.9) g.
  sgd_step(m, grads, velocity, 0.1, 0.9);
  sgd_step(m, grads, velocity, 0.1, 0.9);
  auto ps = model_params(m);
  auto ss = model_params(start);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t k = 0; k < ps[i].second->numel(); ++k)
      EXPECT_NEAR((*ps[i].second)[k], (*ss[i].second)[k] - 0.1 * (1.0 + 1.9) * 2.0, 1e-15);
}

TEST(Sgd, ZeroMomentumIsPlainDescent) {
  ToyModel m = make_toy_model(tiny_model_config(), 5);
  ToyModel start = m;
  ToyModel grads = zero_like(m);
  ToyModel velocity = zero_like(m);
  for (auto& [name, t] : model_params(grads)) t->fill(1.0);
  sgd_step(m, grads, velocity, 0.5, 0.0);
  sgd_step(m, grads, velocity, 0.5, 0.0);
  auto ps = model_params(m);
  auto ss = model_params(start);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t k = 0; k < ps[i].second->numel(); ++k)
      EXPECT_NEAR((*ps[i].second)[k], (*ss[i].second)[k] - 1.0, 1e-15);
}

TEST(Sgd, ConfigValidation) {
  SGDConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lr = -0.1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SGDConfig{};
  cfg.lr = 0.0;  // zero rate is allowed: it freezes the model
  EXPECT_NO_THROW(cfg.validate());
  cfg = SGDConfig{};
  cfg.momentum = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SGDConfig{};
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SGDConfig{};
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Sgd, DecaySchedule) {
  SGDConfig cfg;
  cfg.lr = 1.0;
  cfg.lr_decay = 0.1;
  cfg.decay_epochs = {2, 4};
  EXPECT_DOUBLE_EQ(cfg.lr_at(0), 1.0);
  EXPECT_DOUBLE_EQ(cfg.lr_at(1), 1.0);
  EXPECT_DOUBLE_EQ(cfg.lr_at(2), 0.1);
  EXPECT_DOUBLE_EQ(cfg.lr_at(3), 0.1);
  EXPECT_NEAR(cfg.lr_at(4), 0.01, 1e-15);
}

TEST(TrainLoop, FirstEpochFullBatchLossIsLnClasses) {
  const SynthData data = generate_synthetic(tiny_data_config());
  ToyModel m = make_toy_model(tiny_model_config(), 7);
  SGDConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 16;  // one batch per epoch: every forward sees the fresh model
  const auto trace = train_loop(m, data.train, data.test, cfg);
  ASSERT_EQ(trace.size(), 1u);
  EXPECT_NEAR(trace[0].train_loss, std::log(4.0), 1e-6);
}

TEST(TrainLoop, ZeroRateLeavesTheModelAlone) {
  const SynthData data = generate_synthetic(tiny_data_config());
  ToyModel m = make_toy_model(tiny_model_config(), 7);
  ToyModel before = m;
  SGDConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 3;
  const auto trace = train_loop(m, data.train, data.test, cfg);
  EXPECT_TRUE(models_equal(m, before));
  for (const auto& row : trace) {
    EXPECT_DOUBLE_EQ(row.train_loss, trace[0].train_loss);
    EXPECT_DOUBLE_EQ(row.test_acc, trace[0].test_acc);
  }
}

TEST(TrainLoop, SameSeedSameTrace) {
  const SynthData data = generate_synthetic(tiny_data_config());
  SGDConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 0.05;

  ToyModel a = make_toy_model(tiny_model_config(), 7);
  ToyModel b = make_toy_model(tiny_model_config(), 7);
  const auto ta = train_loop(a, data.train, data.test, cfg);
  const auto tb = train_loop(b, data.train, data.test, cfg);
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].train_loss, tb[i].train_loss);
    EXPECT_EQ(ta[i].train_acc, tb[i].train_acc);
    EXPECT_EQ(ta[i].test_acc, tb[i].test_acc);
  }
  EXPECT_TRUE(models_equal(a, b));
}

TEST(TrainLoop, WorkerCountDoesNotChangeResults) {
  // Per-sample passes are reduced in sample order, so even the floats agree.
  const SynthData data = generate_synthetic(tiny_data_config());
  SGDConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 0.05;
  ToyModel serial = make_toy_model(tiny_model_config(), 7);
  ToyModel threaded = make_toy_model(tiny_model_config(), 7);
  const auto ts = train_loop(serial, data.train, data.test, cfg, 1);
  const auto tt = train_loop(threaded, data.train, data.test, cfg, 3);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_EQ(ts[i].train_loss, tt[i].train_loss);
    EXPECT_EQ(ts[i].test_acc, tt[i].test_acc);
  }
  EXPECT_TRUE(models_equal(serial, threaded));
}

TEST(TrainLoop, LearnsTheToyTask) {
  // 16 samples of the 4-class task on a cramped grid.  The windowed block
  // gets a position readout from boundary clipping, so this variant can
  // actually fit its own training set; the blind baseline pools away
  // nearly everything the labels depend on, which is the entire point of
  // the task design and is asserted at full scale elsewhere.
  SynthConfig dc = tiny_data_config();
  dc.height = 6;
  dc.width = 6;
  dc.noise = 0.02;
  const SynthData data = generate_synthetic(dc);
  ToyModelConfig mc = tiny_model_config();
  mc.block = BlockKind::mask_nonlocal;
  ToyModel m = make_toy_model(mc, 7);
  // A live classifier from the start: with both it and w_z at zero no
  // gradient reaches the block until the head wakes up, which wastes
  // most of the epoch budget.
  std::mt19937_64 rng(2);
  fill_uniform(m.classifier_w, -0.5, 0.5, rng);
  SGDConfig cfg;
  cfg.epochs = 500;
  cfg.lr = 0.1;
  cfg.batch = 8;
  cfg.decay_epochs = {350};  // settles the late-training oscillation
  const auto trace = train_loop(m, data.train, data.train, cfg);
  EXPECT_LT(trace.back().train_loss, 0.5 * trace.front().train_loss);
  EXPECT_GE(trace.back().train_acc, 0.75);
}

TEST(TrainLoop, HugeRateDiverges) {
  const SynthData data = generate_synthetic(tiny_data_config());
  ToyModel m = make_toy_model(tiny_model_config(), 7);
  SGDConfig cfg;
  // Large enough that the second step overflows the features outright;
  // merely big rates stall on the safe log-sum-exp without ever throwing.
  cfg.lr = 1e300;
  cfg.epochs = 4;
  EXPECT_THROW(train_loop(m, data.train, data.test, cfg), TrainingDiverged);
}

TEST(TrainLoop, RejectsForeignLabels) {
  SynthData data = generate_synthetic(tiny_data_config());
  data.train.labels[0] = 11;
  ToyModel m = make_toy_model(tiny_model_config(), 7);
  SGDConfig cfg;
  EXPECT_THROW(train_loop(m, data.train, data.test, cfg), std::invalid_argument);
}

TEST(Trace, CsvFormatIsStable) {
  std::vector<TraceRow> rows = {{0, 1.3862943611198906, 0.25, 0.5},
                                {1, 0.75, 0.8125, 0.625}};
  const auto path = std::filesystem::path(::testing::TempDir()) / "trace.csv";
  write_trace_csv(rows, path.string());
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(ss.str(),
            "epoch,train_loss,train_acc,test_acc\n"
            "0,1.38629436,0.25,0.5\n"
            "1,0.75,0.8125,0.625\n");
}

TEST(Evaluation, AccuracyAndScores) {
  const SynthData data = generate_synthetic(tiny_data_config());
  const ToyModel m = make_toy_model(tiny_model_config(), 7);
  // Fresh model: every logit vector is zero, so argmax picks class 0.
  long zeros = 0;
  for (long l : data.test.labels) zeros += l == 0 ? 1 : 0;
  EXPECT_DOUBLE_EQ(evaluate_accuracy(m, data.test),
                   static_cast<double>(zeros) / static_cast<double>(data.test.size()));

  const ScoreTable table = score_dataset(m, data.test, "test_");
  ASSERT_EQ(table.rows(), data.test.size());
  EXPECT_EQ(table.ids[0], "test_00000");
  EXPECT_EQ(table.labels, data.test.labels);
  check_probability_rows(table, "score_dataset");
  for (std::size_t c = 0; c < table.classes(); ++c)
    EXPECT_NEAR(table.scores.at(0, c), 0.25, 1e-12);
}

TEST(Persistence, SaveModelWritesEveryParameter) {
  ToyModel m = make_toy_model(tiny_model_config(), 7);
  const auto dir = std::filesystem::path(::testing::TempDir()) / "model_save";
  std::filesystem::create_directories(dir);
  save_model(m, dir.string());
  EXPECT_TRUE(std::filesystem::exists(dir / "model.txt"));
  for (auto& [name, t] : model_params(m)) {
    const auto file = dir / (name + ".nlt");
    ASSERT_TRUE(std::filesystem::exists(file)) << name;
    EXPECT_TRUE(read_tensor_as<double>(file.string()) == *t) << name;
  }
}
