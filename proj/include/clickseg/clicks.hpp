#pragma once

// Click simulation and click encoding.
//
// Placement follows the iterative evaluation protocol: find the mislabeled
// pixels of the current prediction, take the largest 4-connected error
// region, and click its most interior pixel, where "interior" is measured as
// min(distance to the region's complement, distance to the image side).

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clickseg/image.hpp"
#include "clickseg/rng.hpp"

namespace clickseg {

struct Click {
  int x = 0;
  int y = 0;
  bool positive = true;
  int ordinal = 1;  // 1-based position within the session

  bool operator==(const Click&) const = default;
};

struct LabelMapTag {};
using LabelMap = Grid<std::int32_t, LabelMapTag>;

struct DistanceMapTag {};
using DistanceMap = Grid<double, DistanceMapTag>;

enum class ErrorKind { FalseNegative, FalsePositive };

struct Region {
  std::int32_t label = 0;
  std::size_t pixels = 0;
  ErrorKind kind = ErrorKind::FalseNegative;
};

struct LabeledRegions {
  LabelMap labels;              // 0 = correctly labeled pixel
  std::vector<Region> regions;  // regions[k-1] describes label k
};

// 4-connected components of the nonzero pixels. Labels start at 1 and are
// assigned in order of first encounter in a row-major scan.
LabelMap connected_components(const BinaryMask& mask);

// Squared Euclidean distance from each nonzero pixel to the nearest zero
// pixel; zero pixels map to 0. When the mask has no zero pixel at all, every
// entry is +infinity (image sides are not treated as background).
DistanceMap edt_squared(const BinaryMask& mask);
DistanceMap edt(const BinaryMask& mask);

// Mislabeled pixels grouped into 4-connected regions of a single error kind
// (a false-negative pixel never joins a touching false-positive one).
LabeledRegions label_errors(const BinaryMask& predicted, const BinaryMask& gt);

struct ClickPlacement {
  Click click;
  std::int32_t region_label = 0;
  std::size_t region_pixels = 0;
  std::vector<std::int32_t> region_indices;  // flat row-major pixel indices of R
};

// Next simulated click; std::nullopt when the binarized prediction already
// equals the ground truth.
std::optional<ClickPlacement> place_next_click(const SoftMask& pred, const BinaryMask& gt,
                                               int ordinal = 1);
// Throws Error(AlreadyCorrect) instead of returning nullopt.
Click next_click(const SoftMask& pred, const BinaryMask& gt, int ordinal = 1);

struct ClickSigmas {
  std::array<double, 3> values{2.0, 6.0, 18.0};

  // Default scales are tuned for a 96 px crop; this scales them linearly.
  static ClickSigmas for_crop(int crop_size);
};

inline constexpr int kClickChannels = 6;

// Planar (channel, y, x); channels 0..2 are positive clicks at increasing
// sigma, 3..5 negative clicks.
struct ClickEncoding {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float at(int channel, int y, int x) const {
    return data[(static_cast<std::size_t>(channel) * height + y) * width + x];
  }
};

ClickEncoding encode_clicks(const std::vector<Click>& clicks, int height, int width,
                            const ClickSigmas& sigmas = {});

struct BundledClickParams {
  int max_positive = 5;
  int max_negative = 10;
  double min_positive_spacing = 5.0;
  double negative_near = 3.0;
  double negative_far = 20.0;
  double min_negative_spacing = 5.0;
  int spacing_attempts = 50;
};

std::vector<Click> bundled_clicks(const BinaryMask& gt, Rng& rng,
                                  const BundledClickParams& params = {});

std::string clicks_to_json(const std::vector<Click>& clicks);
std::vector<Click> clicks_from_json(const std::string& text);

}  // namespace clickseg
