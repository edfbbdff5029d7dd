#pragma once

// Differentiable operators over NCHW tensors. Every op here has an exact
// backward pass that is checked against central finite differences in the
// test suite. Instantiated for float (training/inference) and double
// (gradient checking).

#include <span>
#include <vector>

#include "clickseg/tensor.hpp"

namespace clickseg::nn {

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  int pad = 0;
};

// Cross-correlation. x: [N, Cin, H, W]; weight: [Cout, Cin, k, k] with odd k;
// bias: [1, Cout, 1, 1] or null.
template <typename T>
TensorPtr<T> conv2d(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& weight,
                    const TensorPtr<T>& bias, ConvSpec spec);

// Per output channel: (w - mean) / sqrt(max(var, eps)), statistics over the
// fan-in (population variance).
template <typename T>
TensorPtr<T> weight_standardize(Tape<T>& tape, const TensorPtr<T>& weight, double eps = 1e-5);

// Per (sample, group) standardization with variance + eps, then per-channel
// affine. gamma, beta: [1, C, 1, 1].
template <typename T>
TensorPtr<T> group_norm(Tape<T>& tape, const TensorPtr<T>& x, int groups, const TensorPtr<T>& gamma,
                        const TensorPtr<T>& beta, double eps = 1e-5);

// Subgradient at 0 uses the negative-side slope.
template <typename T>
TensorPtr<T> leaky_relu(Tape<T>& tape, const TensorPtr<T>& x, double slope = 0.01);

// Average pooling to bins x bins cells; cell i spans
// [floor(i*H/bins), ceil((i+1)*H/bins)).
template <typename T>
TensorPtr<T> adaptive_avg_pool(Tape<T>& tape, const TensorPtr<T>& x, int bins);

// Half-pixel-centre bilinear resampling with edge clamping.
template <typename T>
TensorPtr<T> upsample_bilinear(Tape<T>& tape, const TensorPtr<T>& x, int height, int width);

template <typename T>
TensorPtr<T> concat_channels(Tape<T>& tape, const std::vector<TensorPtr<T>>& xs);

// Pyramid pooling: for each bin count b, average-pool x to b x b, 1x1 conv
// (weights[i]: [Cb, C, 1, 1], biases[i]: [1, Cb, 1, 1]), LeakyReLU, bilinear
// upsample back; the result is x concatenated with every branch.
template <typename T>
TensorPtr<T> pyramid_pool(Tape<T>& tape, const TensorPtr<T>& x, const std::vector<int>& bins,
                          const std::vector<TensorPtr<T>>& weights, const std::vector<TensorPtr<T>>& biases,
                          double slope);

// clamp(x, 0, 1). Exact: the gradient passes where 0 <= x <= 1 and is zero
// outside. Restoring: additionally passes it outside when a descent step
// would move x back towards [0, 1], so saturated wrong outputs still learn.
enum class ClipGrad { Exact, Restoring };

template <typename T>
TensorPtr<T> clip01(Tape<T>& tape, const TensorPtr<T>& x, ClipGrad mode = ClipGrad::Exact);

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

struct LossClick {
  int x = 0;
  int y = 0;
};

// Soft-IoU plus click-location loss on a [1, 1, H, W] prediction:
//   L = 1 - (sum p*g + s) / (sum max(p, g) + s) + sum_clicks (p_c - g_c)^2
// with s = smoothing, which makes the IoU term 0 when both masks are empty.
template <typename T>
TensorPtr<T> soft_iou_click_loss(Tape<T>& tape, const TensorPtr<T>& pred, std::span<const T> gt,
                                 std::span<const LossClick> clicks, double smoothing = 1e-6);

// Guided filter applied to a [1, 1, H, W] tensor with a fixed scalar guide
// (row-major H*W). Differentiable with respect to the input only.
template <typename T>
TensorPtr<T> guided_filter_op(Tape<T>& tape, const TensorPtr<T>& input, std::span<const double> guide,
                              int radius, double eps);

}  // namespace clickseg::nn
