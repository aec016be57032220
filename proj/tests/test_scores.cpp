#include "nlv/scores.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "nlv/tensor_ops.hpp"

using namespace nlv;

namespace {

ScoreTable make_table(std::size_t rows, std::size_t classes, std::uint64_t seed,
                      bool stochastic = false) {
  ScoreTable t;
  t.scores = Tensor<double>(Shape{rows, classes});
  std::mt19937_64 rng(seed);
  fill_uniform(t.scores, 0.0, 1.0, rng);
  if (stochastic)
    for (std::size_t i = 0; i < rows; ++i) {
      double sum = 0;
      for (std::size_t c = 0; c < classes; ++c) sum += t.scores.at(i, c);
      for (std::size_t c = 0; c < classes; ++c) t.scores.at(i, c) /= sum;
    }
  for (std::size_t i = 0; i < rows; ++i) {
    t.ids.push_back("vid" + std::to_string(i));
    t.labels.push_back(static_cast<long>(i % classes));
  }
  return t;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::path(::testing::TempDir()) / name;
}

}  // namespace

TEST(ScoreCsv, RoundTripKeepsNineDigits) {
  ScoreTable t = make_table(7, 4, 21);
  t.labels[3] = -1;
  const auto path = temp_path("scores_roundtrip.csv");
  write_score_csv(t, path);
  const ScoreTable back = read_score_csv(path);

  ASSERT_EQ(back.rows(), t.rows());
  ASSERT_EQ(back.classes(), t.classes());
  EXPECT_EQ(back.ids, t.ids);
  EXPECT_EQ(back.labels, t.labels);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t c = 0; c < t.classes(); ++c)
      EXPECT_NEAR(back.scores.at(i, c), t.scores.at(i, c),
                  1e-8 * std::fabs(t.scores.at(i, c)));

  // Writing what was read reproduces the file byte for byte: printing with
  // nine significant digits is a fixed point.
  const auto path2 = temp_path("scores_roundtrip2.csv");
  write_score_csv(back, path2);
  EXPECT_EQ(slurp(path), slurp(path2));
}

TEST(ScoreCsv, WritesLfOnly) {
  const auto path = temp_path("scores_lf.csv");
  write_score_csv(make_table(2, 3, 5), path);
  const std::string text = slurp(path);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.substr(0, 11), "id,label,c0");
  EXPECT_EQ(text.back(), '\n');
}

TEST(ScoreCsv, RejectsMalformedFiles) {
  const auto write_text = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
  };
  const auto path = temp_path("scores_bad.csv");

  write_text(path, "id,c0,c1\n");  // label column missing
  EXPECT_THROW(read_score_csv(path), ScoreCsvError);
  write_text(path, "id,label,c0,c2\nv,0,0.5,0.5\n");  // class columns misnamed
  EXPECT_THROW(read_score_csv(path), ScoreCsvError);
  write_text(path, "id,label,c0,c1\nv,0,0.5\n");  // short row
  EXPECT_THROW(read_score_csv(path), ScoreCsvError);
  write_text(path, "id,label,c0,c1\nv,0,0.5,abc\n");  // non-numeric score
  EXPECT_THROW(read_score_csv(path), ScoreCsvError);
  write_text(path, "id,label,c0,c1\nv,0,0.5,0.5\nv,1,0.5,0.5\n");  // duplicate id
  EXPECT_THROW(read_score_csv(path), std::invalid_argument);
  EXPECT_THROW(read_score_csv(temp_path("scores_missing.csv")), ScoreCsvError);
}

TEST(ScoreCsv, ToleratesCrLfInput) {
  const auto path = temp_path("scores_crlf.csv");
  std::ofstream(path, std::ios::binary) << "id,label,c0,c1\r\nv0,1,0.25,0.75\r\n";
  const ScoreTable t = read_score_csv(path);
  ASSERT_EQ(t.rows(), 1u);
  EXPECT_EQ(t.ids[0], "v0");
  EXPECT_EQ(t.labels[0], 1);
  EXPECT_DOUBLE_EQ(t.scores.at(0, 1), 0.75);
}

TEST(ClipAggregation, MeansSoftmaxedClips) {
  Tensor<double> a(Shape{3}, {1.0, 2.0, 3.0});
  Tensor<double> b(Shape{3}, {3.0, 2.0, 1.0});
  const Tensor<double> probs = aggregate_clip_scores({a, b});

  double sum = 0;
  for (std::size_t c = 0; c < 3; ++c) sum += probs[c];
  EXPECT_NEAR(sum, 1.0, 1e-12);
  // The two clips are mirror images, so the mean is symmetric.
  EXPECT_NEAR(probs[0], probs[2], 1e-15);
  EXPECT_GT(probs[1], 0.0);

  // A single clip is plain softmax.
  const Tensor<double> single = aggregate_clip_scores({a});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(single[2], std::exp(3.0) / z, 1e-12);
  EXPECT_THROW(aggregate_clip_scores({}), std::invalid_argument);
}

TEST(Fusion, SingleTableIsUnchanged) {
  const ScoreTable t = make_table(5, 3, 9, true);
  const ScoreTable fused = fuse_scores({t}, {1.0});
  ASSERT_EQ(fused.rows(), t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t c = 0; c < t.classes(); ++c)
      EXPECT_DOUBLE_EQ(fused.scores.at(i, c), t.scores.at(i, c));
  EXPECT_EQ(fused.labels, t.labels);
}

TEST(Fusion, WeightsAreNormalized) {
  const ScoreTable t = make_table(4, 3, 13, true);
  const ScoreTable a = fuse_scores({t, t}, {1.0, 3.0});
  const ScoreTable b = fuse_scores({t, t}, {0.25, 0.75});
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t c = 0; c < t.classes(); ++c) {
      EXPECT_NEAR(a.scores.at(i, c), t.scores.at(i, c), 1e-12);
      EXPECT_NEAR(a.scores.at(i, c), b.scores.at(i, c), 1e-15);
    }
}

TEST(Fusion, RowsStayStochastic) {
  const ScoreTable a = make_table(6, 4, 17, true);
  ScoreTable b = make_table(6, 4, 18, true);
  const ScoreTable fused = fuse_scores({a, b}, {});
  for (std::size_t i = 0; i < fused.rows(); ++i) {
    double sum = 0;
    for (std::size_t c = 0; c < fused.classes(); ++c) sum += fused.scores.at(i, c);
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Fusion, AlignsRowsById) {
  const ScoreTable a = make_table(4, 2, 31, true);
  ScoreTable b = a;
  // Reverse the second table's rows; fusion must match them back up by id.
  std::reverse(b.ids.begin(), b.ids.end());
  std::reverse(b.labels.begin(), b.labels.end());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 2; ++c) b.scores.at(i, c) = a.scores.at(3 - i, c);

  const ScoreTable fused = fuse_scores({a, b}, {});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 2; ++c)
      EXPECT_NEAR(fused.scores.at(i, c), a.scores.at(i, c), 1e-15);
}

TEST(Fusion, NamesTheFirstMissingId) {
  const ScoreTable a = make_table(3, 2, 41, true);
  ScoreTable b = a;
  b.ids[1] = "elsewhere";
  try {
    fuse_scores({a, b}, {});
    FAIL() << "expected a missing-id error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("vid1"), std::string::npos) << e.what();
  }
}

TEST(Fusion, RejectsBadShapesAndWeights) {
  const ScoreTable a = make_table(3, 2, 43, true);
  const ScoreTable b = make_table(3, 3, 43, true);
  const ScoreTable c = make_table(2, 2, 43, true);
  EXPECT_THROW(fuse_scores({}, {}), std::invalid_argument);
  EXPECT_THROW(fuse_scores({a, b}, {}), std::invalid_argument);
  EXPECT_THROW(fuse_scores({a, c}, {}), std::invalid_argument);
  EXPECT_THROW(fuse_scores({a, a}, {1.0}), std::invalid_argument);
  EXPECT_THROW(fuse_scores({a, a}, {-1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(fuse_scores({a, a}, {0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(fuse_scores({make_table(3, 2, 47, false)}, {}), std::invalid_argument);
}

TEST(Fusion, ComplementaryTablesBeatEitherAlone) {
  // Two tables over 8 videos, 2 classes.  Each is confidently right on its
  // half and mildly wrong on the other; uniform fusion is right everywhere.
  const std::size_t rows = 8;
  ScoreTable a, b;
  a.scores = Tensor<double>(Shape{rows, 2});
  b.scores = Tensor<double>(Shape{rows, 2});
  for (std::size_t i = 0; i < rows; ++i) {
    a.ids.push_back("v" + std::to_string(i));
    b.ids.push_back("v" + std::to_string(i));
    const long label = static_cast<long>(i % 2);
    a.labels.push_back(label);
    b.labels.push_back(label);
    const bool a_half = i < rows / 2;
    const double a_right = a_half ? 0.95 : 0.45;
    const double b_right = a_half ? 0.45 : 0.95;
    a.scores.at(i, static_cast<std::size_t>(label)) = a_right;
    a.scores.at(i, static_cast<std::size_t>(1 - label)) = 1 - a_right;
    b.scores.at(i, static_cast<std::size_t>(label)) = b_right;
    b.scores.at(i, static_cast<std::size_t>(1 - label)) = 1 - b_right;
  }
  const double top1_a = topk_accuracy(a, 1);
  const double top1_b = topk_accuracy(b, 1);
  const double fused = topk_accuracy(fuse_scores({a, b}, {}), 1);
  EXPECT_DOUBLE_EQ(top1_a, 0.5);
  EXPECT_DOUBLE_EQ(top1_b, 0.5);
  EXPECT_GT(fused, top1_a);
  EXPECT_GT(fused, top1_b);
  EXPECT_DOUBLE_EQ(fused, 1.0);
}

TEST(TopK, CountsRankWithTiesAtLowerIndex) {
  ScoreTable t;
  t.ids = {"a", "b", "c"};
  t.labels = {1, 0, 2};
  t.scores = Tensor<double>(Shape{3, 3},
                            {0.2, 0.5, 0.3,    // label 1 ranked first
                             0.4, 0.4, 0.2,    // tie: label 0 wins the tie at lower index
                             0.5, 0.3, 0.2});  // label 2 ranked third
  EXPECT_DOUBLE_EQ(topk_accuracy(t, 1), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(t, 2), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(t, 3), 1.0);

  // The same tie against a later index loses.
  ScoreTable u;
  u.ids = {"a"};
  u.labels = {1};
  u.scores = Tensor<double>(Shape{1, 3}, {0.4, 0.4, 0.2});
  EXPECT_DOUBLE_EQ(topk_accuracy(u, 1), 0.0);
}

TEST(TopK, ValidatesInputs) {
  ScoreTable t = make_table(3, 4, 51, true);
  EXPECT_THROW(topk_accuracy(t, 0), std::invalid_argument);
  EXPECT_THROW(topk_accuracy(t, 5), std::invalid_argument);
  t.labels[0] = -1;
  EXPECT_THROW(topk_accuracy(t, 1), std::invalid_argument);
  ScoreTable empty;
  empty.scores = Tensor<double>(Shape{1, 2});
  empty.ids = {};
  EXPECT_THROW(topk_accuracy(empty, 1), std::invalid_argument);
}

TEST(Probabilities, CheckerCatchesNonStochasticRows) {
  ScoreTable good = make_table(3, 3, 61, true);
  EXPECT_NO_THROW(check_probability_rows(good, "test"));
  good.scores.at(1, 2) += 0.01;
  EXPECT_THROW(check_probability_rows(good, "test"), std::invalid_argument);
}
