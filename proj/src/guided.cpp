#include "clickseg/guided.hpp"

#include <algorithm>

namespace clickseg {

BoxSum::BoxSum(std::span<const double> data, int height, int width)
    : height_(height), width_(width),
      table_((static_cast<std::size_t>(height) + 1) * (static_cast<std::size_t>(width) + 1), 0.0) {
  require(data.size() == static_cast<std::size_t>(height) * width, ErrorCode::Shape,
          "BoxSum: data length does not match dimensions");
  const std::size_t s = static_cast<std::size_t>(width) + 1;
  for (int y = 0; y < height; ++y) {
    double row = 0.0;
    for (int x = 0; x < width; ++x) {
      row += data[static_cast<std::size_t>(y) * width + x];
      table_[(y + 1) * s + x + 1] = table_[y * s + x + 1] + row;
    }
  }
}

namespace {

struct Window {
  int y0, x0, y1, x1;
  double count() const { return static_cast<double>(y1 - y0) * (x1 - x0); }
};

Window window_at(int y, int x, int height, int width, int r) {
  return {std::max(0, y - r), std::max(0, x - r), std::min(height, y + r + 1),
          std::min(width, x + r + 1)};
}

}  // namespace

std::vector<double> box_mean(std::span<const double> data, int height, int width, int radius) {
  require(radius >= 0, ErrorCode::InvalidArgument, "box_mean: negative radius");
  if (radius == 0) return {data.begin(), data.end()};
  const BoxSum sums(data, height, width);
  std::vector<double> out(data.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Window w = window_at(y, x, height, width, radius);
      out[static_cast<std::size_t>(y) * width + x] = sums.sum(w.y0, w.x0, w.y1, w.x1) / w.count();
    }
  }
  return out;
}

std::vector<double> box_mean_adjoint(std::span<const double> upstream, int height, int width,
                                     int radius) {
  require(radius >= 0, ErrorCode::InvalidArgument, "box_mean: negative radius");
  if (radius == 0) return {upstream.begin(), upstream.end()};
  // Each output i spreads upstream[i] / count(i) over its window, and the
  // windows are symmetric, so the adjoint is a box sum of the scaled field.
  std::vector<double> scaled(upstream.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      scaled[i] = upstream[i] / window_at(y, x, height, width, radius).count();
    }
  }
  const BoxSum sums(scaled, height, width);
  std::vector<double> out(upstream.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Window w = window_at(y, x, height, width, radius);
      out[static_cast<std::size_t>(y) * width + x] = sums.sum(w.y0, w.x0, w.y1, w.x1);
    }
  }
  return out;
}

namespace {

struct GuideStats {
  std::vector<double> mean_i;
  std::vector<double> var_i;
};

GuideStats guide_stats(std::span<const double> guide, int height, int width, int r) {
  GuideStats s;
  s.mean_i = box_mean(guide, height, width, r);
  std::vector<double> sq(guide.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = guide[i] * guide[i];
  s.var_i = box_mean(sq, height, width, r);
  for (std::size_t i = 0; i < sq.size(); ++i) s.var_i[i] -= s.mean_i[i] * s.mean_i[i];
  return s;
}

void check_params(std::span<const double> guide, std::span<const double> input, int height,
                  int width, const GuidedFilterParams& p) {
  require(p.radius >= 1, ErrorCode::InvalidArgument, "guided filter radius must be >= 1");
  require(p.eps > 0.0, ErrorCode::InvalidArgument, "guided filter eps must be > 0");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  require(guide.size() == n && input.size() == n, ErrorCode::Shape,
          "guided filter: guide/input dimension mismatch");
}

}  // namespace

std::vector<double> guided_filter_raw(std::span<const double> guide, std::span<const double> input,
                                      int height, int width, const GuidedFilterParams& p) {
  check_params(guide, input, height, width, p);
  const int r = p.radius;
  const GuideStats gs = guide_stats(guide, height, width, r);
  const std::vector<double> mean_p = box_mean(input, height, width, r);
  std::vector<double> ip(input.size());
  for (std::size_t i = 0; i < ip.size(); ++i) ip[i] = guide[i] * input[i];
  const std::vector<double> mean_ip = box_mean(ip, height, width, r);

  std::vector<double> a(input.size());
  std::vector<double> b(input.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double cov = mean_ip[i] - gs.mean_i[i] * mean_p[i];
    a[i] = cov / (gs.var_i[i] + p.eps);
    b[i] = mean_p[i] - a[i] * gs.mean_i[i];
  }
  const std::vector<double> mean_a = box_mean(a, height, width, r);
  const std::vector<double> mean_b = box_mean(b, height, width, r);
  std::vector<double> q(input.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = mean_a[i] * guide[i] + mean_b[i];
  return q;
}

std::vector<double> guided_filter_raw_backward(std::span<const double> guide,
                                               std::span<const double> upstream, int height,
                                               int width, const GuidedFilterParams& p) {
  check_params(guide, upstream, height, width, p);
  const int r = p.radius;
  const GuideStats gs = guide_stats(guide, height, width, r);
  const std::size_t n = upstream.size();

  std::vector<double> g_mean_a(n);
  for (std::size_t i = 0; i < n; ++i) g_mean_a[i] = upstream[i] * guide[i];
  const std::vector<double> g_a_direct = box_mean_adjoint(g_mean_a, height, width, r);
  const std::vector<double> g_b = box_mean_adjoint(upstream, height, width, r);

  std::vector<double> g_mean_p(n);
  std::vector<double> g_mean_ip(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g_a = g_a_direct[i] - g_b[i] * gs.mean_i[i];
    const double inv = 1.0 / (gs.var_i[i] + p.eps);
    g_mean_ip[i] = g_a * inv;
    g_mean_p[i] = g_b[i] - g_a * inv * gs.mean_i[i];
  }
  const std::vector<double> from_p = box_mean_adjoint(g_mean_p, height, width, r);
  const std::vector<double> from_ip = box_mean_adjoint(g_mean_ip, height, width, r);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = from_p[i] + guide[i] * from_ip[i];
  return out;
}

namespace {

SoftMask filter_with_guide(std::span<const double> guide, const SoftMask& input,
                           const GuidedFilterParams& params) {
  std::vector<double> p(input.vec().begin(), input.vec().end());
  const std::vector<double> q = guided_filter_raw(guide, p, input.height(), input.width(), params);
  SoftMask out(input.height(), input.width());
  for (std::size_t i = 0; i < q.size(); ++i)
    out[i] = static_cast<float>(std::clamp(q[i], 0.0, 1.0));
  return out;
}

}  // namespace

SoftMask guided_filter(const Image& guide, const SoftMask& input, const GuidedFilterParams& params) {
  require(guide.same_shape(input), ErrorCode::Shape, "guided filter: guide/input dimension mismatch");
  return filter_with_guide(luminance(guide), input, params);
}

SoftMask guided_filter(const SoftMask& guide, const SoftMask& input, const GuidedFilterParams& params) {
  require(guide.same_shape(input), ErrorCode::Shape, "guided filter: guide/input dimension mismatch");
  const std::vector<double> g(guide.vec().begin(), guide.vec().end());
  return filter_with_guide(g, input, params);
}

}  // namespace clickseg
