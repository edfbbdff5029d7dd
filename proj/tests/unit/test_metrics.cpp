#include <gtest/gtest.h>

#include <cmath>

#include "clickseg/metrics.hpp"
#include "oracles.hpp"

using namespace clickseg;

namespace {

IoUCurve constant(double v, int k = 20) { return {"", std::vector<double>(k, v)}; }

std::vector<IoUCurve> random_curves(Rng& rng, int n, int k) {
  std::vector<IoUCurve> out;
  for (int i = 0; i < n; ++i) {
    IoUCurve c;
    double v = rng.uniform(0.0, 0.9);
    for (int j = 0; j < k; ++j) {
      v = std::min(1.0, std::max(0.0, v + rng.uniform(-0.05, 0.1)));
      c.values.push_back(rng.bernoulli(0.1) ? std::round(v * 20) / 20 : v);  // exact threshold hits
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST(Iou, WorkedExamples) {
  BinaryMask a(2, 2), b(2, 2);
  a.at(0, 0) = a.at(0, 1) = 1;
  b.at(0, 1) = b.at(1, 1) = 1;
  EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  BinaryMask c(2, 2);
  c.at(1, 0) = 1;
  EXPECT_DOUBLE_EQ(iou(a, c), 0.0);
  EXPECT_DOUBLE_EQ(iou(BinaryMask(3, 3), BinaryMask(3, 3)), 1.0);
  EXPECT_THROW(iou(a, BinaryMask(2, 3)), Error);
}

TEST(Iou, SymmetricAndMatchesOracle) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto a = oracle::random_mask(rng, 16, 16, 0.1), b = oracle::random_mask(rng, 16, 16, 0.1);
    EXPECT_EQ(iou(a, b), iou(b, a));
    EXPECT_NEAR(iou(a, b), oracle::iou(a, b), 1e-12);
  }
}

TEST(Iou, DecreasesAsFlipsMoveAwayFromTruth) {
  Rng rng(2);
  auto gt = oracle::random_mask(rng, 16, 16, 0.0);
  gt.at(8, 8) = 1;
  auto pred = gt;
  double last = iou(pred, gt);
  for (int step = 0; step < 60; ++step) {
    int i;
    do {
      i = int(rng.uniform_int(0, 255));
    } while (pred[i] != gt[i]);
    pred[i] ^= 1;
    const double now = iou(pred, gt);
    ASSERT_LT(now, last);
    last = now;
  }
}

TEST(Noc, ExamplesAndCap) {
  IoUCurve c{"", {0.85, 0.92, 0.95}};
  EXPECT_EQ(noc(c, 0.90), 2);
  EXPECT_EQ(noc(c, 0.85), 1);
  EXPECT_EQ(noc(constant(0.5), 0.9), 20);
}

TEST(Noc, MonotoneUnderPointwiseImprovement) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    auto c = random_curves(rng, 1, 20)[0];
    auto better = c;
    for (auto& v : better.values) v = std::min(1.0, v + rng.uniform(0.0, 0.1));
    for (double th : {0.8, 0.85, 0.9, 0.95}) ASSERT_LE(noc(better, th), noc(c, th));
  }
}

TEST(Auc, WorkedExamples) {
  const std::vector<IoUCurve> one{constant(0.8)};
  EXPECT_NEAR(auc(one).mean, 0.8, 1e-15);
  EXPECT_EQ(auc(one).ci95, 0.0);
  const std::vector<IoUCurve> two{constant(0.6), constant(1.0)};
  const auto s = auc(two);
  EXPECT_NEAR(s.mean, 0.8, 1e-12);
  EXPECT_NEAR(s.ci95, 1.96 * 0.28284271247461906 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(s.ci95, 0.392, 1e-12);
  const std::vector<IoUCurve> same{constant(0.7), constant(0.7), constant(0.7)};
  EXPECT_NEAR(auc(same).ci95, 0.0, 1e-15);
  EXPECT_THROW(auc(std::vector<IoUCurve>{}), Error);
}

TEST(Metrics, AggregatesMatchBruteForce) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const int n = int(rng.uniform_int(1, 12));
    const auto curves = random_curves(rng, n, 20);
    std::vector<double> per;
    for (const auto& c : curves) per.push_back(oracle::mean(c.values));
    const auto s = auc(curves);
    ASSERT_NEAR(s.mean, oracle::mean(per), 1e-12);
    ASSERT_NEAR(s.ci95, n > 1 ? 1.96 * oracle::sample_std(per) / std::sqrt(double(n)) : 0.0, 1e-12);
    for (double th : {0.85, 0.9, 0.95, 0.99}) {
      std::vector<double> nocs;
      for (const auto& c : curves) nocs.push_back(oracle::noc(c.values, th));
      ASSERT_NEAR(mean_noc(curves, th), oracle::mean(nocs), 1e-12);
    }
    const std::vector<double> ths{0.5, 0.85, 0.9, 0.95, 0.99};
    const std::vector<int> ks{1, 5, 10, 20};
    const auto tp = threshold_proportions(curves, ths, ks);
    for (std::size_t a = 0; a < ths.size(); ++a)
      for (std::size_t b = 0; b < ks.size(); ++b) {
        int hits = 0;
        for (const auto& c : curves) hits += c.values[ks[b] - 1] >= ths[a];
        ASSERT_NEAR(tp[a][b], double(hits) / n, 1e-12);
      }
  }
}

TEST(ThresholdProportions, Examples) {
  const std::vector<IoUCurve> ones{constant(1.0), constant(1.0)};
  const std::vector<double> th{0.5, 0.99};
  const std::vector<int> ks{1, 20};
  for (const auto& row : threshold_proportions(ones, th, ks))
    for (double v : row) EXPECT_EQ(v, 1.0);
  const std::vector<IoUCurve> two{constant(0.96), constant(0.92)};
  const std::vector<double> t95{0.95};
  const std::vector<int> k20{20};
  EXPECT_EQ(threshold_proportions(two, t95, k20)[0][0], 0.5);
  const std::vector<int> k21{21};
  EXPECT_THROW(threshold_proportions(two, t95, k21), Error);
}

TEST(CorrectionAccuracy, CountsFixedPixels) {
  BinaryMask gt(10, 10, 1);
  SoftMask pred(10, 10, 0.0f);
  std::vector<std::int32_t> region(100);
  for (int i = 0; i < 100; ++i) region[i] = i;
  for (int i = 0; i < 80; ++i) pred[i] = 0.9f;
  EXPECT_DOUBLE_EQ(correction_accuracy(pred, gt, region), 0.8);
  for (int i = 0; i < 100; ++i) pred[i] = 1.0f;
  EXPECT_DOUBLE_EQ(correction_accuracy(pred, gt, region), 1.0);
  EXPECT_THROW(correction_accuracy(pred, gt, std::vector<std::int32_t>{}), Error);
}

TEST(MeanCurve, Pointwise) {
  const std::vector<IoUCurve> cs{{"a", {0.2, 0.4}}, {"b", {0.6, 1.0}}};
  const auto m = mean_curve(cs);
  EXPECT_NEAR(m[0], 0.4, 1e-15);
  EXPECT_NEAR(m[1], 0.7, 1e-15);
}
