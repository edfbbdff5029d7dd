#pragma once

// Guided-filter refinement of soft masks, built on O(1) box means from an
// integral image. Windows shrink at the image border and are normalized by
// their true pixel count.

#include <span>
#include <vector>

#include "clickseg/image.hpp"

namespace clickseg {

// (H+1) x (W+1) running sums in double precision.
class BoxSum {
 public:
  BoxSum(std::span<const double> data, int height, int width);

  // Sum over rows [y0, y1) and columns [x0, x1).
  double sum(int y0, int x0, int y1, int x1) const {
    const std::size_t s = static_cast<std::size_t>(width_) + 1;
    return table_[y1 * s + x1] - table_[y0 * s + x1] - table_[y1 * s + x0] + table_[y0 * s + x0];
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

 private:
  int height_;
  int width_;
  std::vector<double> table_;
};

std::vector<double> box_mean(std::span<const double> data, int height, int width, int radius);

// Adjoint of box_mean: returns g with <box_mean(x), y> == <x, g> for all x.
std::vector<double> box_mean_adjoint(std::span<const double> upstream, int height, int width,
                                     int radius);

struct GuidedFilterParams {
  int radius = 2;
  double eps = 1e-4;
};

// Unclamped filter output for a scalar guide.
std::vector<double> guided_filter_raw(std::span<const double> guide, std::span<const double> input,
                                      int height, int width, const GuidedFilterParams& params);

// Gradient of sum(upstream * guided_filter_raw(guide, input)) w.r.t. input.
// The filter is linear in its input for a fixed guide, so this is exact.
std::vector<double> guided_filter_raw_backward(std::span<const double> guide,
                                               std::span<const double> upstream, int height,
                                               int width, const GuidedFilterParams& params);

// Color guides are reduced to luminance; output clamped to [0, 1].
SoftMask guided_filter(const Image& guide, const SoftMask& input, const GuidedFilterParams& params = {});
SoftMask guided_filter(const SoftMask& guide, const SoftMask& input,
                       const GuidedFilterParams& params = {});

}  // namespace clickseg
