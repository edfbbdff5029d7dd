#include <gtest/gtest.h>

#include <cmath>

#include "clickseg/ops.hpp"
#include "gradcheck.hpp"

using namespace clickseg;
using namespace clickseg::nn;
using gradcheck::random_tensor;
using gradcheck::weighted_sum;

namespace {

constexpr double kTol64 = 1e-6;
constexpr double kTol32 = 1e-3;

std::vector<double> weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1, 1);
  return w;
}

// Keeps values at least `gap` away from `k` so finite differences never
// straddle a kink.
void avoid(const TensorPtr<double>& t, double k, double gap) {
  for (auto& v : t->data())
    if (std::abs(v - k) < gap) v = k + (v < k ? -gap : gap);
}

#define EXPECT_GRADS_OK(r)                    \
  do {                                        \
    const auto res = (r);                     \
    EXPECT_LE(res.f64.max_rel, kTol64);       \
    EXPECT_LE(res.f32.max_rel, kTol32);       \
    EXPECT_GT(res.f64.checked, 0u);           \
  } while (0)

}  // namespace

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  auto x = random_tensor<double>(rng, {1, 3, 5, 4});
  auto w = make_tensor<double>({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w->at(c, c, 0, 0) = 1.0;
  Tape<double> tape(false);
  EXPECT_EQ(conv2d(tape, x, w, TensorPtr<double>{}, {})->data(), x->data());
}

TEST(Conv2d, OnesKernelOnOnes) {
  auto x = make_tensor<double>({1, 1, 5, 5}, 1.0);
  auto w = make_tensor<double>({1, 1, 3, 3}, 1.0);
  Tape<double> tape(false);
  const auto y = conv2d(tape, x, w, TensorPtr<double>{}, {1, 1, 1});
  EXPECT_EQ(y->at(0, 0, 2, 2), 9.0);
  EXPECT_EQ(y->at(0, 0, 0, 0), 4.0);
}

TEST(Conv2d, ShapeMismatchRejected) {
  Tape<double> tape(false);
  EXPECT_THROW(conv2d(tape, make_tensor<double>({1, 2, 4, 4}), make_tensor<double>({1, 3, 3, 3}),
                      TensorPtr<double>{}, {}),
               Error);
  EXPECT_THROW(conv2d(tape, make_tensor<double>({1, 2, 4, 4}), make_tensor<double>({1, 2, 2, 2}),
                      TensorPtr<double>{}, {}),
               Error);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  for (ConvSpec spec : {ConvSpec{1, 1, 1}, ConvSpec{2, 1, 1}, ConvSpec{1, 2, 2}, ConvSpec{2, 1, 0}}) {
    std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 3, 7, 6}),
                                      random_tensor<double>(rng, {4, 3, 3, 3}),
                                      random_tensor<double>(rng, {1, 4, 1, 1})};
    Tape<double> probe(false);
    const auto wv = weights(rng, conv2d(probe, in[0], in[1], in[2], spec)->numel());
    auto f = [&](auto& tape, const auto& v) { return weighted_sum(tape, conv2d(tape, v[0], v[1], v[2], spec), wv); };
    EXPECT_GRADS_OK(gradcheck::check(f, f, in));
  }
}

TEST(WeightStandardize, StandardizedKernelUnchangedAndConstantVanishes) {
  Rng rng(3);
  auto w = random_tensor<double>(rng, {2, 3, 3, 3});
  Tape<double> tape(false);
  const auto once = weight_standardize(tape, w, 0.0);
  const auto twice = weight_standardize(tape, once, 1e-5);
  for (std::size_t i = 0; i < once->numel(); ++i) EXPECT_NEAR(twice->data()[i], once->data()[i], 1e-5);
  const auto zero = weight_standardize(tape, make_tensor<double>({2, 2, 3, 3}, 0.7));
  for (double v : zero->data()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(WeightStandardize, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {3, 2, 3, 3})};
  const auto wv = weights(rng, in[0]->numel());
  auto f = [&](auto& tape, const auto& v) { return weighted_sum(tape, weight_standardize(tape, v[0]), wv); };
  EXPECT_GRADS_OK(gradcheck::check(f, f, in));
}

TEST(GroupNorm, ConstantInputGivesZeros) {
  Tape<double> tape(false);
  const auto y = group_norm(tape, make_tensor<double>({1, 4, 3, 3}, 2.5), 2, make_tensor<double>({1, 4, 1, 1}, 1.0),
                            make_tensor<double>({1, 4, 1, 1}, 0.0));
  for (double v : y->data()) EXPECT_EQ(v, 0.0);
}

TEST(GroupNorm, GroupsAreStandardized) {
  Rng rng(5);
  Tape<double> tape(false);
  const auto x = random_tensor<double>(rng, {1, 6, 4, 5}, -3, 5);
  const auto y = group_norm(tape, x, 3, make_tensor<double>({1, 6, 1, 1}, 1.0), make_tensor<double>({1, 6, 1, 1}));
  for (int g = 0; g < 3; ++g) {
    double s = 0, ss = 0;
    const int n = 2 * 20;
    for (int c = 2 * g; c < 2 * g + 2; ++c)
      for (int i = 0; i < 20; ++i) s += y->data()[c * 20 + i];
    const double m = s / n;
    for (int c = 2 * g; c < 2 * g + 2; ++c)
      for (int i = 0; i < 20; ++i) ss += std::pow(y->data()[c * 20 + i] - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(ss / n, 1.0, 1e-5);
  }
  EXPECT_THROW(group_norm(tape, x, 4, make_tensor<double>({1, 6, 1, 1}), make_tensor<double>({1, 6, 1, 1})), Error);
}

TEST(GroupNorm, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 4, 3, 4}), random_tensor<double>(rng, {1, 4, 1, 1}),
                                    random_tensor<double>(rng, {1, 4, 1, 1})};
  const auto wv = weights(rng, in[0]->numel());
  auto f = [&](auto& tape, const auto& v) { return weighted_sum(tape, group_norm(tape, v[0], 2, v[1], v[2]), wv); };
  EXPECT_GRADS_OK(gradcheck::check(f, f, in));
}

TEST(LeakyRelu, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 2, 5, 5})};
  avoid(in[0], 0.0, 0.01);
  const auto wv = weights(rng, in[0]->numel());
  auto f = [&](auto& tape, const auto& v) { return weighted_sum(tape, leaky_relu(tape, v[0], 0.01), wv); };
  EXPECT_GRADS_OK(gradcheck::check(f, f, in));
}

TEST(AdaptivePool, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  for (int bins : {1, 2, 3, 4}) {
    std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 2, 7, 5})};
    const auto wv = weights(rng, 2 * bins * bins);
    auto f = [&](auto& tape, const auto& v) { return weighted_sum(tape, adaptive_avg_pool(tape, v[0], bins), wv); };
    EXPECT_GRADS_OK(gradcheck::check(f, f, in));
  }
}

TEST(Upsample, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 2, 3, 4})};
  const auto wv = weights(rng, 2 * 6 * 8);
  auto f = [&](auto& tape, const auto& v) { return weighted_sum(tape, upsample_bilinear(tape, v[0], 6, 8), wv); };
  EXPECT_GRADS_OK(gradcheck::check(f, f, in));
}

TEST(Upsample, ConstantStaysConstant) {
  Tape<double> tape(false);
  const auto y = upsample_bilinear(tape, make_tensor<double>({1, 1, 2, 3}, 0.4), 7, 5);
  for (double v : y->data()) EXPECT_NEAR(v, 0.4, 1e-15);
}

TEST(PyramidPool, ConstantInputGivesConstantBranches) {
  Rng rng(10);
  auto x = make_tensor<double>({1, 3, 8, 8}, 0.3);
  std::vector<TensorPtr<double>> w, b;
  for (int i = 0; i < 3; ++i) {
    w.push_back(random_tensor<double>(rng, {2, 3, 1, 1}));
    b.push_back(random_tensor<double>(rng, {1, 2, 1, 1}));
  }
  Tape<double> tape(false);
  const auto y = pyramid_pool(tape, x, {1, 2, 4}, w, b, 0.01);
  ASSERT_EQ(y->shape(), (Shape{1, 3 + 3 * 2, 8, 8}));
  for (int c = 0; c < y->shape().c; ++c)
    for (int i = 1; i < 64; ++i) ASSERT_NEAR(y->data()[c * 64 + i], y->data()[c * 64], 1e-12);
  EXPECT_THROW(pyramid_pool(tape, make_tensor<double>({1, 3, 3, 3}), {1, 2, 4}, w, b, 0.01), Error);
}

TEST(PyramidPool, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 3, 8, 8})};
  for (int i = 0; i < 3; ++i) {
    in.push_back(random_tensor<double>(rng, {2, 3, 1, 1}));
    in.push_back(random_tensor<double>(rng, {1, 2, 1, 1}, 0.05, 0.5));
  }
  const auto wv = weights(rng, 9 * 64);
  auto f = [&](auto& tape, const auto& v) {
    return weighted_sum(tape, pyramid_pool(tape, v[0], {1, 2, 4}, {v[1], v[3], v[5]}, {v[2], v[4], v[6]}, 0.01), wv);
  };
  const auto r = gradcheck::check(f, f, in);
  EXPECT_LE(r.f64.max_rel, kTol64);
  EXPECT_LE(r.f32.max_rel, kTol32);
}

TEST(ConcatAdd, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 2, 3, 3}), random_tensor<double>(rng, {1, 1, 3, 3}),
                                    random_tensor<double>(rng, {1, 3, 3, 3})};
  const auto wv = weights(rng, 27);
  auto f = [&](auto& tape, const auto& v) {
    return weighted_sum(tape, add(tape, concat_channels(tape, {v[0], v[1]}), v[2]), wv);
  };
  EXPECT_GRADS_OK(gradcheck::check(f, f, in));
}

TEST(Clip, ExactConventionGradients) {
  Rng rng(13);
  std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 1, 6, 6}, -0.5, 1.5)};
  avoid(in[0], 0.0, 0.01);
  avoid(in[0], 1.0, 0.01);
  const auto wv = weights(rng, 36);
  auto f = [&](auto& tape, const auto& v) { return weighted_sum(tape, clip01(tape, v[0]), wv); };
  EXPECT_GRADS_OK(gradcheck::check(f, f, in));
  Tape<double> tape(false);
  const auto y = clip01(tape, in[0]);
  for (double v : y->data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Clip, RestoringPassesOnlyInwardGradients) {
  auto x = make_tensor<double>({1, 1, 1, 4}, std::vector<double>{-0.5, -0.5, 1.5, 1.5});
  x->set_requires_grad(true);
  Tape<double> tape(true);
  // d loss / d out = {-1, +1, +1, -1}: descent raises, lowers, lowers, raises.
  tape.backward(weighted_sum(tape, clip01(tape, x, ClipGrad::Restoring), {-1, 1, 1, -1}));
  EXPECT_EQ(x->grad_view(), (std::vector<double>{-1, 0, 1, 0}));
}

TEST(Loss, WorkedExample) {
  auto p = make_tensor<double>({1, 1, 2, 2}, 0.5);
  const std::vector<double> gt{1, 1, 0, 0};
  const std::vector<LossClick> clicks{{0, 0}};
  Tape<double> tape(false);
  const double l = soft_iou_click_loss<double>(tape, p, gt, clicks)->data()[0];
  EXPECT_NEAR(l, 1.0 - 1.0 / 3.0 + 0.25, 1e-6);
}

TEST(Loss, Examples) {
  Tape<double> tape(false);
  const std::vector<double> gt{1, 0, 1, 0, 0, 1};
  auto exact = make_tensor<double>({1, 1, 2, 3}, gt);
  EXPECT_NEAR(soft_iou_click_loss<double>(tape, exact, gt, std::vector<LossClick>{{0, 0}, {1, 0}})->data()[0], 0.0,
              1e-12);
  auto zero = make_tensor<double>({1, 1, 2, 3});
  EXPECT_NEAR(soft_iou_click_loss<double>(tape, zero, gt, std::vector<LossClick>{})->data()[0], 1.0, 1e-6);
  const std::vector<double> empty(6, 0.0);
  EXPECT_NEAR(soft_iou_click_loss<double>(tape, zero, empty, std::vector<LossClick>{})->data()[0], 0.0, 1e-12);
  EXPECT_THROW(soft_iou_click_loss<double>(tape, zero, gt, std::vector<LossClick>{{3, 0}}), Error);
}

TEST(Loss, NonNegativeAndIouTermBounded) {
  Rng rng(14);
  for (int t = 0; t < 50; ++t) {
    auto p = random_tensor<double>(rng, {1, 1, 4, 4}, 0, 1);
    std::vector<double> gt(16);
    for (auto& g : gt) g = rng.bernoulli(0.5);
    Tape<double> tape(false);
    const double iou_term = soft_iou_click_loss<double>(tape, p, gt, std::vector<LossClick>{})->data()[0];
    EXPECT_GE(iou_term, 0.0);
    EXPECT_LE(iou_term, 1.0);
    const std::vector<LossClick> cs{{int(rng.uniform_int(0, 3)), int(rng.uniform_int(0, 3))}};
    EXPECT_GE(soft_iou_click_loss<double>(tape, p, gt, cs)->data()[0], iou_term);
  }
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng(15);
  std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 1, 5, 6}, 0.05, 0.95)};
  std::vector<double> gtd(30);
  for (auto& g : gtd) g = rng.bernoulli(0.4);
  const std::vector<float> gtf(gtd.begin(), gtd.end());
  const std::vector<LossClick> clicks{{1, 1}, {4, 3}, {5, 0}};
  auto f64 = [&](Tape<double>& tape, const std::vector<TensorPtr<double>>& v) {
    return soft_iou_click_loss<double>(tape, v[0], gtd, clicks);
  };
  auto f32 = [&](Tape<float>& tape, const std::vector<TensorPtr<float>>& v) {
    return soft_iou_click_loss<float>(tape, v[0], gtf, clicks);
  };
  EXPECT_GRADS_OK(gradcheck::check(f64, f32, in));
  // The 2x2 worked example.
  std::vector<TensorPtr<double>> small{make_tensor<double>({1, 1, 2, 2}, 0.5)};
  const std::vector<double> g2{1, 1, 0, 0};
  const std::vector<float> g2f{1, 1, 0, 0};
  const std::vector<LossClick> c2{{0, 0}};
  auto s64 = [&](Tape<double>& tape, const std::vector<TensorPtr<double>>& v) {
    return soft_iou_click_loss<double>(tape, v[0], g2, c2);
  };
  auto s32 = [&](Tape<float>& tape, const std::vector<TensorPtr<float>>& v) {
    return soft_iou_click_loss<float>(tape, v[0], g2f, c2);
  };
  EXPECT_GRADS_OK(gradcheck::check(s64, s32, small));
}

TEST(GuidedFilterOp, GradientsMatchFiniteDifferences) {
  Rng rng(16);
  std::vector<TensorPtr<double>> in{random_tensor<double>(rng, {1, 1, 8, 7}, 0, 1)};
  std::vector<double> guide(56);
  for (auto& g : guide) g = rng.uniform();
  const auto wv = weights(rng, 56);
  auto f = [&](auto& tape, const auto& v) { return weighted_sum(tape, guided_filter_op(tape, v[0], guide, 2, 1e-2), wv); };
  EXPECT_GRADS_OK(gradcheck::check(f, f, in));
}
