#include "clickseg/metrics.hpp"

#include <cmath>

namespace clickseg {

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  require(pred.same_shape(gt), ErrorCode::Shape, "iou: dimension mismatch");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

int noc(const IoUCurve& curve, double threshold) {
  for (std::size_t k = 0; k < curve.values.size(); ++k)
    if (curve.values[k] >= threshold) return static_cast<int>(k + 1);
  return static_cast<int>(curve.values.size());
}

double mean_noc(std::span<const IoUCurve> curves, double threshold) {
  require(!curves.empty(), ErrorCode::InvalidArgument, "mean_noc: no curves");
  double sum = 0.0;
  for (const auto& c : curves) sum += noc(c, threshold);
  return sum / static_cast<double>(curves.size());
}

double curve_auc(const IoUCurve& curve) {
  require(!curve.values.empty(), ErrorCode::InvalidArgument, "auc: empty curve");
  double sum = 0.0;
  for (double v : curve.values) sum += v;
  return sum / static_cast<double>(curve.values.size());
}

AucSummary auc(std::span<const IoUCurve> curves) {
  require(!curves.empty(), ErrorCode::InvalidArgument, "auc: no curves");
  const double n = static_cast<double>(curves.size());
  std::vector<double> per(curves.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    per[i] = curve_auc(curves[i]);
    sum += per[i];
  }
  AucSummary out;
  out.mean = sum / n;
  if (curves.size() > 1) {
    double ss = 0.0;
    for (double v : per) ss += (v - out.mean) * (v - out.mean);
    const double stddev = std::sqrt(ss / (n - 1.0));
    out.ci95 = 1.96 * stddev / std::sqrt(n);
  }
  return out;
}

double correction_accuracy(const SoftMask& new_pred, const BinaryMask& gt,
                           std::span<const std::int32_t> click_region) {
  require(new_pred.same_shape(gt), ErrorCode::Shape, "correction_accuracy: dimension mismatch");
  require(!click_region.empty(), ErrorCode::InvalidArgument, "correction_accuracy: empty region");
  std::size_t correct = 0;
  for (const std::int32_t idx : click_region) {
    require(idx >= 0 && static_cast<std::size_t>(idx) < gt.size(), ErrorCode::InvalidArgument,
            "correction_accuracy: region index out of range");
    const bool p = new_pred[idx] > 0.5f;
    correct += p == (gt[idx] != 0);
  }
  return static_cast<double>(correct) / static_cast<double>(click_region.size());
}

std::vector<std::vector<double>> threshold_proportions(std::span<const IoUCurve> curves,
                                                       std::span<const double> thresholds,
                                                       std::span<const int> clicks) {
  std::vector<std::vector<double>> out(thresholds.size(), std::vector<double>(clicks.size(), 0.0));
  if (curves.empty()) return out;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    require(thresholds[t] >= 0.0 && thresholds[t] <= 1.0, ErrorCode::InvalidArgument,
            "threshold outside [0,1]");
    for (std::size_t n = 0; n < clicks.size(); ++n) {
      std::size_t hits = 0;
      for (const auto& c : curves) {
        require(clicks[n] >= 1 && static_cast<std::size_t>(clicks[n]) <= c.values.size(),
                ErrorCode::InvalidArgument, "click index beyond curve length");
        hits += c.values[clicks[n] - 1] >= thresholds[t];
      }
      out[t][n] = static_cast<double>(hits) / static_cast<double>(curves.size());
    }
  }
  return out;
}

std::vector<double> mean_curve(std::span<const IoUCurve> curves) {
  require(!curves.empty(), ErrorCode::InvalidArgument, "mean_curve: no curves");
  std::vector<double> out(curves.front().values.size(), 0.0);
  for (const auto& c : curves) {
    require(c.values.size() == out.size(), ErrorCode::Shape, "curves differ in length");
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += c.values[k];
  }
  for (auto& v : out) v /= static_cast<double>(curves.size());
  return out;
}

}  // namespace clickseg
