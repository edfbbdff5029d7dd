#pragma once

// Evaluation quantities for click-driven segmentation: IoU, per-click
// curves, NoC@x, AuC with a normal-approximation interval, correction
// accuracy and threshold-proportion tables.

#include <span>
#include <string>
#include <vector>

#include "clickseg/image.hpp"

namespace clickseg {

struct IoUCurve {
  std::string image_id;
  std::vector<double> values;  // values[k-1] = IoU after k clicks
};

// |pred & gt| / |pred | gt|; two empty masks score 1.
double iou(const BinaryMask& pred, const BinaryMask& gt);

// Smallest click count k (1-based) with curve[k] >= threshold; the curve
// length K when never reached.
int noc(const IoUCurve& curve, double threshold);
double mean_noc(std::span<const IoUCurve> curves, double threshold);

struct AucSummary {
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 * sample std / sqrt(n); 0 for n == 1
};

double curve_auc(const IoUCurve& curve);
AucSummary auc(std::span<const IoUCurve> curves);

// Fraction of click_region pixels (flat indices) where binarize(new_pred)
// agrees with gt.
double correction_accuracy(const SoftMask& new_pred, const BinaryMask& gt,
                           std::span<const std::int32_t> click_region);

// entry[t][n] = fraction of curves with curve[clicks[n]] >= thresholds[t].
std::vector<std::vector<double>> threshold_proportions(std::span<const IoUCurve> curves,
                                                       std::span<const double> thresholds,
                                                       std::span<const int> clicks);

std::vector<double> mean_curve(std::span<const IoUCurve> curves);

}  // namespace clickseg
