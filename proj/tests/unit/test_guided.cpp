#include <gtest/gtest.h>

#include <cmath>

#include "clickseg/guided.hpp"
#include "oracles.hpp"

using namespace clickseg;

namespace {

std::vector<double> random_field(Rng& rng, int n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform();
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(BoxSum, CornerReadsMatchDirectSums) {
  Rng rng(1);
  const int h = 13, w = 9;
  const auto f = random_field(rng, h * w);
  BoxSum box(f, h, w);
  for (int t = 0; t < 200; ++t) {
    int y0 = int(rng.uniform_int(0, h)), y1 = int(rng.uniform_int(0, h));
    int x0 = int(rng.uniform_int(0, w)), x1 = int(rng.uniform_int(0, w));
    if (y0 > y1) std::swap(y0, y1);
    if (x0 > x1) std::swap(x0, x1);
    double direct = 0;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) direct += f[y * w + x];
    ASSERT_NEAR(box.sum(y0, x0, y1, x1), direct, 1e-9 * std::max(1.0, std::abs(direct)));
  }
}

TEST(BoxMean, IdentityAtRadiusZeroAndConstantPreserved) {
  Rng rng(2);
  const auto f = random_field(rng, 20);
  EXPECT_LT(max_abs_diff(box_mean(f, 4, 5, 0), f), 1e-15);
  const std::vector<double> c(30, 0.37);
  for (double v : box_mean(c, 5, 6, 3)) EXPECT_NEAR(v, 0.37, 1e-15);
}

TEST(BoxMean, MatchesNestedLoops) {
  Rng rng(3);
  const int h = 16, w = 16, r = 3;
  const auto f = random_field(rng, h * w);
  const auto got = box_mean(f, h, w, r);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      int n = 0;
      for (int v = std::max(0, y - r); v <= std::min(h - 1, y + r); ++v)
        for (int u = std::max(0, x - r); u <= std::min(w - 1, x + r); ++u, ++n) s += f[v * w + u];
      ASSERT_NEAR(got[y * w + x], s / n, 1e-9);
    }
}

TEST(BoxMean, AdjointDotProduct) {
  Rng rng(4);
  for (int r : {0, 1, 2, 5}) {
    const int h = 11, w = 7;
    const auto x = random_field(rng, h * w), y = random_field(rng, h * w);
    const auto bx = box_mean(x, h, w, r);
    const auto aty = box_mean_adjoint(y, h, w, r);
    double lhs = 0, rhs = 0;
    for (int i = 0; i < h * w; ++i) {
      lhs += bx[i] * y[i];
      rhs += x[i] * aty[i];
    }
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(GuidedFilter, MatchesDirectWindowOracle) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const int h = 32, w = 32;
    const auto I = random_field(rng, h * w), p = random_field(rng, h * w);
    const int r = int(rng.uniform_int(1, 4));
    const double eps = t % 2 ? 1e-4 : 1e-2;
    const auto raw = guided_filter_raw(I, p, h, w, {r, eps});
    EXPECT_LE(max_abs_diff(raw, oracle::guided_filter(I, p, h, w, r, eps, false)), 1e-6);
    SoftMask guide(h, w), in(h, w);
    for (int i = 0; i < h * w; ++i) {
      guide[i] = float(I[i]);
      in[i] = float(p[i]);
    }
    const auto out = guided_filter(guide, in, {r, eps});
    // The public entry point starts from float inputs; compare against the
    // oracle run on the same float-rounded values.
    std::vector<double> If(guide.vec().begin(), guide.vec().end()), pf(in.vec().begin(), in.vec().end());
    const auto want = oracle::guided_filter(If, pf, h, w, r, eps, true);
    for (int i = 0; i < h * w; ++i) ASSERT_NEAR(out[i], want[i], 1e-6);
  }
}

TEST(GuidedFilter, ConstantInputIsExactIdentity) {
  Rng rng(6);
  Image guide(20, 24);
  for (auto& v : guide.data()) v = float(rng.uniform());
  for (float c : {0.0f, 0.25f, 0.5f, 1.0f}) {
    const SoftMask in(20, 24, c);
    const auto out = guided_filter(guide, in);
    for (std::size_t i = 0; i < out.size(); ++i) ASSERT_EQ(out[i], c);
  }
}

TEST(GuidedFilter, SharpStepGuideIsNearIdentityAwayFromBorders) {
  const int h = 24, w = 24;
  SoftMask step(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = w / 2; x < w; ++x) step.at(y, x) = 1.0f;
  const auto out = guided_filter(step, step, {2, 1e-6});
  for (int y = 2; y < h - 2; ++y)
    for (int x = 2; x < w - 2; ++x) ASSERT_NEAR(out.at(y, x), step.at(y, x), 1e-3);
}

TEST(GuidedFilter, HugeEpsIsDoubleBoxSmoothing) {
  Rng rng(7);
  const int h = 16, w = 20, r = 2;
  const auto I = random_field(rng, h * w), p = random_field(rng, h * w);
  const auto got = guided_filter_raw(I, p, h, w, {r, 1e6});
  const auto want = box_mean(box_mean(p, h, w, r), h, w, r);
  EXPECT_LE(max_abs_diff(got, want), 1e-6);
}

TEST(GuidedFilter, ColorGuideUsesLuminance) {
  Rng rng(8);
  Image color(10, 12);
  for (auto& v : color.data()) v = float(rng.uniform());
  SoftMask luma(10, 12), in(10, 12);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x) {
      luma.at(y, x) = float(0.299 * color.at(y, x, 0) + 0.587 * color.at(y, x, 1) + 0.114 * color.at(y, x, 2));
      in.at(y, x) = float(rng.uniform());
    }
  const auto a = guided_filter(color, in), b = guided_filter(luma, in);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-5);
}

TEST(GuidedFilter, OutputClampedAndShapeChecked) {
  Rng rng(9);
  SoftMask g(16, 16), p(16, 16);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = float(rng.uniform());
    p[i] = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  }
  const auto out = guided_filter(g, p, {3, 1e-6});
  for (float v : out.vec()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  EXPECT_THROW(guided_filter(g, SoftMask(15, 16)), Error);
}

TEST(GuidedFilter, BackwardIsTheAdjointOfTheLinearMap) {
  Rng rng(10);
  const int h = 9, w = 13;
  const auto I = random_field(rng, h * w), p = random_field(rng, h * w), up = random_field(rng, h * w);
  const GuidedFilterParams gp{2, 1e-3};
  const auto q = guided_filter_raw(I, p, h, w, gp);
  const auto g = guided_filter_raw_backward(I, up, h, w, gp);
  double lhs = 0, rhs = 0;
  for (int i = 0; i < h * w; ++i) {
    lhs += q[i] * up[i];
    rhs += p[i] * g[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-10);
}
