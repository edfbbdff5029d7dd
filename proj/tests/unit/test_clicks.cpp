#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "clickseg/clicks.hpp"
#include "oracles.hpp"

using namespace clickseg;

namespace {

BinaryMask square(int h, int w, int y0, int x0, int size) {
  BinaryMask m(h, w);
  for (int y = y0; y < y0 + size; ++y)
    for (int x = x0; x < x0 + size; ++x) m.at(y, x) = 1;
  return m;
}

}  // namespace

TEST(ConnectedComponents, EmptyMaskHasNoLabels) {
  const auto l = connected_components(BinaryMask(5, 7));
  EXPECT_TRUE(std::all_of(l.vec().begin(), l.vec().end(), [](int v) { return v == 0; }));
}

TEST(ConnectedComponents, DiagonalNeighboursAreSeparate) {
  BinaryMask m(3, 3);
  m.at(0, 0) = 1;
  m.at(1, 1) = 1;
  const auto l = connected_components(m);
  EXPECT_EQ(l.at(0, 0), 1);
  EXPECT_EQ(l.at(1, 1), 2);
}

TEST(ConnectedComponents, LabelsFollowFirstEncounterOrder) {
  // A U shape whose right arm is met first on row 0 only after the left arm.
  BinaryMask m(3, 5);
  for (int y = 0; y < 3; ++y) m.at(y, 0) = m.at(y, 4) = 1;
  for (int x = 0; x < 5; ++x) m.at(2, x) = 1;
  m.at(0, 2) = 1;
  const auto l = connected_components(m);
  EXPECT_EQ(l.at(0, 0), 1);
  EXPECT_EQ(l.at(0, 4), 1);
  EXPECT_EQ(l.at(0, 2), 2);
}

TEST(ConnectedComponents, MatchesFloodFillOracle) {
  Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    const int h = int(rng.uniform_int(1, 24)), w = int(rng.uniform_int(1, 24));
    const auto m = oracle::random_mask(rng, h, w, 0.15);
    const auto got = connected_components(m);
    const auto want = oracle::flood_labels(m);
    ASSERT_EQ(std::vector<int>(got.vec().begin(), got.vec().end()), want) << "trial " << trial;
  }
}

TEST(Edt, IsolatedPixelIsOneAway) {
  BinaryMask m(5, 5);
  m.at(2, 2) = 1;
  EXPECT_DOUBLE_EQ(edt(m).at(2, 2), 1.0);
}

TEST(Edt, AllBackgroundIsZero) {
  const auto d = edt(BinaryMask(4, 6));
  EXPECT_TRUE(std::all_of(d.vec().begin(), d.vec().end(), [](double v) { return v == 0.0; }));
}

TEST(Edt, AllForegroundIsInfinite) {
  const auto d = edt_squared(BinaryMask(3, 3, 1));
  EXPECT_TRUE(std::isinf(d.at(1, 1)));
}

TEST(Edt, MatchesBruteForce) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = int(rng.uniform_int(1, 32)), w = int(rng.uniform_int(1, 32));
    const auto m = oracle::random_mask(rng, h, w, 0.05);
    const auto got = edt(m);
    const auto want = oracle::edt_squared(m);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (std::isinf(want[i])) {
        ASSERT_TRUE(std::isinf(got[i]));
      } else {
        ASSERT_NEAR(got[i], std::sqrt(want[i]), 1e-9) << "trial " << trial << " pixel " << i;
      }
    }
  }
}

TEST(LabelErrors, TouchingErrorsOfDifferentKindStaySeparate) {
  BinaryMask gt(1, 4), pred(1, 4);
  gt[1] = 1;    // false negative at x=1
  pred[2] = 1;  // false positive at x=2
  const auto r = label_errors(pred, gt);
  ASSERT_EQ(r.regions.size(), 2u);
  EXPECT_EQ(r.regions[0].kind, ErrorKind::FalseNegative);
  EXPECT_EQ(r.regions[1].kind, ErrorKind::FalsePositive);
}

TEST(NextClick, CentreOfSquareOnEmptyPrediction) {
  const auto gt = square(64, 64, 30, 30, 5);
  const Click c = next_click(SoftMask(64, 64), gt);
  EXPECT_EQ(c.x, 32);
  EXPECT_EQ(c.y, 32);
  EXPECT_TRUE(c.positive);
}

TEST(NextClick, FullFalsePositiveGivesCentralNegative) {
  const Click c = next_click(SoftMask(9, 9, 1.0f), BinaryMask(9, 9));
  EXPECT_EQ(c.x, 4);
  EXPECT_EQ(c.y, 4);
  EXPECT_FALSE(c.positive);
}

TEST(NextClick, AlreadyCorrectIsSignalled) {
  const auto gt = square(8, 8, 2, 2, 3);
  EXPECT_FALSE(place_next_click(to_soft(gt), gt).has_value());
  try {
    next_click(to_soft(gt), gt);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AlreadyCorrect);
  }
}

TEST(NextClick, HalfIsBackground) {
  // binarize uses a strict threshold, so 0.5 counts as background.
  BinaryMask gt(3, 3, 1);
  const Click c = next_click(SoftMask(3, 3, 0.5f), gt);
  EXPECT_TRUE(c.positive);
  EXPECT_EQ(c.x, 1);
  EXPECT_EQ(c.y, 1);
}

TEST(NextClick, EqualRegionsPickTheFirstLabel) {
  BinaryMask gt(10, 10);
  for (int y = 1; y < 4; ++y)
    for (int x = 6; x < 9; ++x) gt.at(y, x) = 1;
  for (int y = 6; y < 9; ++y)
    for (int x = 1; x < 4; ++x) gt.at(y, x) = 1;
  const Click c = next_click(SoftMask(10, 10), gt);
  EXPECT_EQ(c.x, 7);
  EXPECT_EQ(c.y, 2);
}

TEST(NextClick, MatchesExhaustiveOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 80; ++trial) {
    const int h = int(rng.uniform_int(1, 40)), w = int(rng.uniform_int(1, 40));
    const auto gt = oracle::random_mask(rng, h, w, 0.01);
    const auto pred = trial % 2 ? oracle::perturbed_prediction(rng, gt) : oracle::random_soft(rng, h, w);
    const auto want = oracle::next_click(pred, gt);
    const auto got = place_next_click(pred, gt, 3);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (!want) continue;
    EXPECT_EQ(got->click.x, want->x) << "trial " << trial;
    EXPECT_EQ(got->click.y, want->y) << "trial " << trial;
    EXPECT_EQ(got->click.positive, want->positive) << "trial " << trial;
    EXPECT_EQ(got->click.ordinal, 3);
  }
}

TEST(NextClick, LandsOnMislabeledPixelWithMatchingPolarity) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = int(rng.uniform_int(1, 48)), w = int(rng.uniform_int(1, 48));
    const auto gt = oracle::random_mask(rng, h, w, 0.03);
    const auto pred = oracle::perturbed_prediction(rng, gt);
    const auto p = place_next_click(pred, gt);
    if (!p) continue;
    const bool predicted = pred.at(p->click.y, p->click.x) > 0.5f;
    const bool truth = gt.at(p->click.y, p->click.x) != 0;
    ASSERT_NE(predicted, truth);
    ASSERT_EQ(p->click.positive, truth);
    ASSERT_EQ(p->region_indices.size(), p->region_pixels);
  }
}

TEST(EncodeClicks, PeakIsOneOnItsChannels) {
  const auto e = encode_clicks({{5, 4, true, 1}}, 12, 12);
  for (int s = 0; s < 3; ++s) {
    EXPECT_FLOAT_EQ(e.at(s, 4, 5), 1.0f);
    EXPECT_FLOAT_EQ(e.at(3 + s, 4, 5), 0.0f);
  }
}

TEST(EncodeClicks, OneSigmaAway) {
  ClickSigmas sg;
  sg.values = {2.0, 6.0, 18.0};
  const auto e = encode_clicks({{10, 10, false, 1}}, 40, 40, sg);
  EXPECT_NEAR(e.at(3, 10, 12), std::exp(-0.5), 1e-6);
  EXPECT_NEAR(e.at(4, 16, 10), std::exp(-0.5), 1e-6);
}

TEST(EncodeClicks, TruncatedBeyondFourSigma) {
  const auto e = encode_clicks({{0, 0, true, 1}}, 20, 20);
  EXPECT_GT(e.at(0, 0, 8), 0.0f);   // exactly 4 sigma
  EXPECT_EQ(e.at(0, 0, 9), 0.0f);   // beyond
  EXPECT_EQ(e.at(0, 6, 6), 0.0f);   // sqrt(72) > 8
}

TEST(EncodeClicks, CombinesByMaxNotSum) {
  std::vector<Click> both{{4, 4, true, 1}, {7, 4, true, 2}};
  const auto e = encode_clicks(both, 10, 12);
  for (int x = 0; x < 12; ++x) {
    const double a = std::exp(-((x - 4) * (x - 4) + 1) / 8.0);
    const double b = std::exp(-((x - 7) * (x - 7) + 1) / 8.0);
    const double da = std::hypot(x - 4, 1), db = std::hypot(x - 7, 1);
    const double want = std::max(da <= 8 ? a : 0.0, db <= 8 ? b : 0.0);
    EXPECT_NEAR(e.at(0, 5, x), want, 1e-6);
  }
}

TEST(EncodeClicks, PermutationInvariantAndMonotone) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Click> cs;
    const int n = int(rng.uniform_int(1, 6));
    for (int i = 0; i < n; ++i)
      cs.push_back({int(rng.uniform_int(0, 23)), int(rng.uniform_int(0, 15)), rng.bernoulli(0.5), i + 1});
    auto rev = cs;
    std::reverse(rev.begin(), rev.end());
    const auto a = encode_clicks(cs, 16, 24);
    EXPECT_EQ(a.data, encode_clicks(rev, 16, 24).data);
    auto fewer = cs;
    fewer.pop_back();
    const auto b = encode_clicks(fewer, 16, 24);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      ASSERT_GE(a.data[i], b.data[i]);
      ASSERT_GE(a.data[i], 0.0f);
      ASSERT_LE(a.data[i], 1.0f);
    }
  }
}

TEST(EncodeClicks, OutOfBoundsRejected) {
  EXPECT_THROW(encode_clicks({{10, 0, true, 1}}, 10, 10), Error);
}

TEST(BundledClicks, SinglePixelObject) {
  BinaryMask gt(20, 20);
  gt.at(10, 10) = 1;
  Rng rng(3);
  const auto cs = bundled_clicks(gt, rng);
  ASSERT_FALSE(cs.empty());
  EXPECT_EQ(cs[0].x, 10);
  EXPECT_EQ(cs[0].y, 10);
  EXPECT_EQ(std::count_if(cs.begin(), cs.end(), [](const Click& c) { return c.positive; }), 1);
}

TEST(BundledClicks, DeterministicAndOnTheRightSide) {
  Rng gen(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto gt = oracle::random_mask(gen, 48, 48, 0.0);
    if (count_foreground(gt) == 0) gt.at(5, 5) = 1;
    Rng a(trial), b(trial);
    const auto ca = bundled_clicks(gt, a);
    ASSERT_EQ(ca, bundled_clicks(gt, b));
    BinaryMask bg(48, 48);
    for (std::size_t i = 0; i < gt.size(); ++i) bg[i] = !gt[i];
    const auto dist = edt(bg);
    for (const auto& c : ca) {
      ASSERT_EQ(gt.at(c.y, c.x) != 0, c.positive);
      if (!c.positive) {
        ASSERT_GE(dist.at(c.y, c.x), 3.0);
        ASSERT_LE(dist.at(c.y, c.x), 20.0);
      }
    }
  }
}

TEST(ClickJson, RoundTrip) {
  std::vector<Click> cs{{1, 2, true, 1}, {3, 4, false, 2}};
  EXPECT_EQ(clicks_from_json(clicks_to_json(cs)), cs);
  EXPECT_THROW(clicks_from_json("{}"), Error);
  EXPECT_THROW(clicks_from_json("[{\"x\":1}]"), Error);
}
