#include "clickseg/clicks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace clickseg {

namespace {

class DisjointSet {
 public:
  std::int32_t make() {
    parent_.push_back(static_cast<std::int32_t>(parent_.size()));
    return parent_.back();
  }
  std::int32_t find(std::int32_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
  }

 private:
  std::vector<std::int32_t> parent_;
};

constexpr double kFar = 1e20;

// Lower envelope of parabolas q -> f[q] + (p - q)^2, evaluated in place.
void distance_1d(std::vector<double>& f, std::vector<double>& out, std::vector<int>& v,
                 std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    auto intersect = [&](int r) {
      return ((f[q] + static_cast<double>(q) * q) - (f[r] + static_cast<double>(r) * r)) /
             (2.0 * (q - r));
    };
    double s = intersect(v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int p = 0; p < n; ++p) {
    while (z[k + 1] < p) ++k;
    const double d = p - v[k];
    out[p] = d * d + f[v[k]];
  }
}

// Components of nonzero pixels; neighbours join only when their values are
// equal.
LabelMap components_by_class(const BinaryMask& classes) {
  const int h = classes.height();
  const int w = classes.width();
  LabelMap provisional(h, w, -1);
  DisjointSet sets;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t c = classes.at(y, x);
      if (!c) continue;
      const std::int32_t up = y > 0 && classes.at(y - 1, x) == c ? provisional.at(y - 1, x) : -1;
      const std::int32_t left = x > 0 && classes.at(y, x - 1) == c ? provisional.at(y, x - 1) : -1;
      if (up < 0 && left < 0) {
        provisional.at(y, x) = sets.make();
      } else if (up >= 0 && left >= 0) {
        provisional.at(y, x) = std::min(up, left);
        sets.unite(up, left);
      } else {
        provisional.at(y, x) = std::max(up, left);
      }
    }
  }
  LabelMap labels(h, w, 0);
  std::vector<std::int32_t> remap;
  std::int32_t next = 1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (provisional[i] < 0) continue;
    const std::int32_t root = sets.find(provisional[i]);
    if (static_cast<std::size_t>(root) >= remap.size()) remap.resize(root + 1, 0);
    if (remap[root] == 0) remap[root] = next++;
    labels[i] = remap[root];
  }
  return labels;
}

}  // namespace

LabelMap connected_components(const BinaryMask& mask) {
  BinaryMask ones(mask.height(), mask.width());
  for (std::size_t i = 0; i < mask.size(); ++i) ones[i] = mask[i] ? 1 : 0;
  return components_by_class(ones);
}

DistanceMap edt_squared(const BinaryMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  DistanceMap d(h, w);
  if (d.empty()) return d;
  const int n = std::max(h, w);
  std::vector<double> f(n), out(n), z(n + 1);
  std::vector<int> v(n);
  bool any_background = false;

  for (int x = 0; x < w; ++x) {
    f.resize(h);
    out.resize(h);
    for (int y = 0; y < h; ++y) {
      f[y] = mask.at(y, x) ? kFar : 0.0;
      any_background = any_background || !mask.at(y, x);
    }
    distance_1d(f, out, v, z);
    for (int y = 0; y < h; ++y) d.at(y, x) = out[y];
  }
  if (!any_background) {
    std::fill(d.vec().begin(), d.vec().end(), std::numeric_limits<double>::infinity());
    return d;
  }
  f.resize(w);
  out.resize(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = std::min(d.at(y, x), kFar);
    distance_1d(f, out, v, z);
    for (int x = 0; x < w; ++x) d.at(y, x) = out[x];
  }
  return d;
}

DistanceMap edt(const BinaryMask& mask) {
  DistanceMap d = edt_squared(mask);
  for (auto& v : d.vec()) v = std::sqrt(v);
  return d;
}

LabeledRegions label_errors(const BinaryMask& predicted, const BinaryMask& gt) {
  require(predicted.same_shape(gt), ErrorCode::Shape, "prediction/ground-truth dimension mismatch");
  // 1 = false negative, 2 = false positive. Touching regions of different
  // kinds stay separate so that every region has a single click polarity.
  BinaryMask wrong(gt.height(), gt.width());
  for (std::size_t i = 0; i < wrong.size(); ++i)
    if ((predicted[i] != 0) != (gt[i] != 0)) wrong[i] = gt[i] ? 1 : 2;
  LabeledRegions out{components_by_class(wrong), {}};
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    const std::int32_t l = out.labels[i];
    if (l == 0) continue;
    if (static_cast<std::size_t>(l) > out.regions.size()) {
      out.regions.push_back({l, 0, gt[i] ? ErrorKind::FalseNegative : ErrorKind::FalsePositive});
    }
    ++out.regions[l - 1].pixels;
  }
  return out;
}

std::optional<ClickPlacement> place_next_click(const SoftMask& pred, const BinaryMask& gt,
                                               int ordinal) {
  require(pred.same_shape(gt), ErrorCode::Shape, "prediction/ground-truth dimension mismatch");
  const LabeledRegions errors = label_errors(binarize(pred, 0.5), gt);
  if (errors.regions.empty()) return std::nullopt;

  // Largest region; ties resolve to the smallest label.
  const Region* best = &errors.regions.front();
  for (const Region& r : errors.regions)
    if (r.pixels > best->pixels) best = &r;

  const int h = gt.height();
  const int w = gt.width();
  BinaryMask region(h, w);
  ClickPlacement placement;
  placement.region_label = best->label;
  placement.region_pixels = best->pixels;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (errors.labels[i] == best->label) {
      region[i] = 1;
      placement.region_indices.push_back(static_cast<std::int32_t>(i));
    }
  }
  const DistanceMap inside = edt_squared(region);

  // Compare squared scores; all quantities are exact integers (or +inf).
  double best_score = -1.0;
  int best_index = -1;
  for (const std::int32_t idx : placement.region_indices) {
    const int y = idx / w;
    const int x = idx % w;
    const double border = std::min({x + 1, y + 1, w - x, h - y});
    const double score = std::min(inside[idx], border * border);
    if (score > best_score) {
      best_score = score;
      best_index = idx;
    }
  }
  placement.click.y = best_index / w;
  placement.click.x = best_index % w;
  placement.click.positive = best->kind == ErrorKind::FalseNegative;
  placement.click.ordinal = ordinal;
  return placement;
}

Click next_click(const SoftMask& pred, const BinaryMask& gt, int ordinal) {
  auto placement = place_next_click(pred, gt, ordinal);
  if (!placement) fail(ErrorCode::AlreadyCorrect, "prediction already matches ground truth");
  return placement->click;
}

ClickSigmas ClickSigmas::for_crop(int crop_size) {
  ClickSigmas s;
  const double k = static_cast<double>(crop_size) / 96.0;
  for (auto& v : s.values) v *= k;
  return s;
}

ClickEncoding encode_clicks(const std::vector<Click>& clicks, int height, int width,
                            const ClickSigmas& sigmas) {
  const auto& sg = sigmas.values;
  require(sg[0] > 0.0 && sg[0] < sg[1] && sg[1] < sg[2], ErrorCode::InvalidArgument,
          "click sigmas must be positive and strictly increasing");
  ClickEncoding enc{height, width,
                    std::vector<float>(static_cast<std::size_t>(kClickChannels) * height * width, 0.0f)};
  for (const Click& c : clicks) {
    require(c.x >= 0 && c.x < width && c.y >= 0 && c.y < height, ErrorCode::InvalidArgument,
            "click out of bounds");
    for (int s = 0; s < 3; ++s) {
      const int channel = (c.positive ? 0 : 3) + s;
      const double sigma = sg[s];
      const double cutoff = 4.0 * sigma;
      const int reach = static_cast<int>(std::floor(cutoff));
      const double inv = 1.0 / (2.0 * sigma * sigma);
      float* plane = enc.data.data() + static_cast<std::size_t>(channel) * height * width;
      for (int y = std::max(0, c.y - reach); y <= std::min(height - 1, c.y + reach); ++y) {
        for (int x = std::max(0, c.x - reach); x <= std::min(width - 1, c.x + reach); ++x) {
          const double d2 = static_cast<double>(x - c.x) * (x - c.x) +
                            static_cast<double>(y - c.y) * (y - c.y);
          if (d2 > cutoff * cutoff) continue;
          const float v = static_cast<float>(std::exp(-d2 * inv));
          float& dst = plane[static_cast<std::size_t>(y) * width + x];
          dst = std::max(dst, v);
        }
      }
    }
  }
  return enc;
}

std::vector<Click> bundled_clicks(const BinaryMask& gt, Rng& rng, const BundledClickParams& p) {
  require(count_foreground(gt) > 0, ErrorCode::InvalidArgument, "ground truth is empty");
  const int w = gt.width();
  std::vector<std::int32_t> fg;
  std::vector<std::int32_t> band;
  BinaryMask background(gt.height(), w);
  for (std::size_t i = 0; i < gt.size(); ++i) background[i] = gt[i] ? 0 : 1;
  const DistanceMap to_object = edt(background);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i]) {
      fg.push_back(static_cast<std::int32_t>(i));
    } else if (to_object[i] >= p.negative_near && to_object[i] <= p.negative_far) {
      band.push_back(static_cast<std::int32_t>(i));
    }
  }

  std::vector<Click> out;
  auto spaced = [&](int idx, bool positive, double spacing) {
    const int y = idx / w;
    const int x = idx % w;
    for (const Click& c : out) {
      if (c.positive != positive) continue;
      const double d = std::hypot(c.x - x, c.y - y);
      if (d < spacing) return false;
    }
    return true;
  };
  auto draw = [&](const std::vector<std::int32_t>& pool, int count, bool positive, double spacing) {
    for (int n = 0; n < count; ++n) {
      bool placed = false;
      for (int attempt = 0; attempt < p.spacing_attempts && !placed; ++attempt) {
        const int idx = pool[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
        if (!spaced(idx, positive, spacing)) continue;
        out.push_back({idx % w, idx / w, positive, static_cast<int>(out.size()) + 1});
        placed = true;
      }
      if (!placed) break;
    }
  };

  const int n_pos = static_cast<int>(rng.uniform_int(1, std::max(1, p.max_positive)));
  const int n_neg = static_cast<int>(rng.uniform_int(0, std::max(0, p.max_negative)));
  draw(fg, n_pos, true, p.min_positive_spacing);
  if (!band.empty()) draw(band, n_neg, false, p.min_negative_spacing);
  return out;
}

std::string clicks_to_json(const std::vector<Click>& clicks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Click& c : clicks)
    arr.push_back({{"x", c.x}, {"y", c.y}, {"pos", c.positive}, {"k", c.ordinal}});
  return arr.dump();
}

std::vector<Click> clicks_from_json(const std::string& text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("click JSON: ") + e.what());
  }
  require(arr.is_array(), ErrorCode::Format, "click JSON must be an array");
  std::vector<Click> out;
  int k = 0;
  for (const auto& item : arr) {
    try {
      Click c;
      c.x = item.at("x").get<int>();
      c.y = item.at("y").get<int>();
      c.positive = item.at("pos").get<bool>();
      c.ordinal = item.contains("k") ? item.at("k").get<int>() : k + 1;
      out.push_back(c);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Format, std::string("click JSON entry: ") + e.what());
    }
    ++k;
  }
  return out;
}

}  // namespace clickseg
