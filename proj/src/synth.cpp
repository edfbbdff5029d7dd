#include "clickseg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

namespace clickseg {

namespace fs = std::filesystem;

std::pair<int, int> scaled_extent(const ForegroundAsset& fg, double scale, int crop) {
  const int h = fg.alpha.height();
  const int w = fg.alpha.width();
  const double s = scale * crop / std::max(h, w);
  const int fh = std::clamp(static_cast<int>(std::lround(h * s)), 1, crop);
  const int fw = std::clamp(static_cast<int>(std::lround(w * s)), 1, crop);
  return {fh, fw};
}

namespace {

struct Tap {
  int y0, y1, x0, x1;
  double wy, wx;
};

Tap bilinear_tap(double sy, double sx, int h, int w) {
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  Tap t;
  t.y0 = static_cast<int>(std::floor(sy));
  t.x0 = static_cast<int>(std::floor(sx));
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.wy = sy - t.y0;
  t.wx = sx - t.x0;
  return t;
}

template <typename F>
double lerp2(const Tap& t, F&& at) {
  const double top = at(t.y0, t.x0) * (1 - t.wx) + at(t.y0, t.x1) * t.wx;
  const double bot = at(t.y1, t.x0) * (1 - t.wx) + at(t.y1, t.x1) * t.wx;
  return top * (1 - t.wy) + bot * t.wy;
}

}  // namespace

PlacedForeground place_foreground(const ForegroundAsset& fg, const Placement& placement, int crop) {
  const int h = fg.alpha.height();
  const int w = fg.alpha.width();
  const auto [fh, fw] = scaled_extent(fg, placement.scale, crop);
  PlacedForeground out{Image(crop, crop), AlphaMatte(crop, crop)};
  for (int y = 0; y < crop; ++y) {
    const int ly = y - placement.dy;
    if (ly < 0 || ly >= fh) continue;
    for (int x = 0; x < crop; ++x) {
      int lx = x - placement.dx;
      if (lx < 0 || lx >= fw) continue;
      if (placement.flip) lx = fw - 1 - lx;
      const Tap t = bilinear_tap((ly + 0.5) * h / fh - 0.5, (lx + 0.5) * w / fw - 0.5, h, w);
      out.alpha.at(y, x) = static_cast<float>(lerp2(t, [&](int r, int c) { return fg.alpha.at(r, c); }));
      for (int ch = 0; ch < 3; ++ch)
        out.color.at(y, x, ch) =
            static_cast<float>(lerp2(t, [&](int r, int c) { return fg.color.at(r, c, ch); }));
    }
  }
  return out;
}

Image background_window(const Image& bg, int crop, std::uint64_t seed) {
  require(bg.height() > 0 && bg.width() > 0, ErrorCode::Shape, "empty background");
  const Image src = pad_edge(bg, crop, crop);
  Rng rng(seed);
  const int oy = static_cast<int>(rng.uniform_int(0, src.height() - crop));
  const int ox = static_cast<int>(rng.uniform_int(0, src.width() - crop));
  Image out(crop, crop);
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(oy + y, ox + x, c);
  return out;
}

CompositeSample composite(const ForegroundAsset& fg, const BackgroundAsset& bg, const Placement& placement,
                          std::uint64_t seed, int crop) {
  require(crop > 0, ErrorCode::InvalidArgument, "crop must be positive");
  require(fg.color.same_shape(fg.alpha), ErrorCode::Shape, "foreground color/alpha size mismatch: " + fg.id);
  const auto [fh, fw] = scaled_extent(fg, placement.scale, crop);
  require(placement.dx >= 0 && placement.dy >= 0 && placement.dx + fw <= crop && placement.dy + fh <= crop,
          ErrorCode::InvalidArgument, "placement does not fit the crop");
  const PlacedForeground placed = place_foreground(fg, placement, crop);
  const Image back = background_window(bg.image, crop, seed);
  CompositeSample s;
  s.image = Image(crop, crop);
  s.alpha = placed.alpha;
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x) {
      const double a = placed.alpha.at(y, x);
      for (int c = 0; c < 3; ++c)
        s.image.at(y, x, c) = static_cast<float>(a * placed.color.at(y, x, c) + (1.0 - a) * back.at(y, x, c));
    }
  s.mask = binarize(s.alpha, 0.5);
  s.provenance = {fg.id, bg.id, placement, seed};
  return s;
}

Placement sample_placement(const ForegroundAsset& fg, Rng& rng, const SynthParams& params) {
  require(params.scale_min > 0 && params.scale_min <= params.scale_max && params.scale_max <= 1.0,
          ErrorCode::InvalidArgument, "scale range must satisfy 0 < min <= max <= 1");
  for (int attempt = 0; attempt < params.placement_tries; ++attempt) {
    Placement p;
    p.scale = rng.uniform(params.scale_min, params.scale_max);
    const auto [fh, fw] = scaled_extent(fg, p.scale, params.crop);
    p.dx = static_cast<int>(rng.uniform_int(0, params.crop - fw));
    p.dy = static_cast<int>(rng.uniform_int(0, params.crop - fh));
    p.flip = rng.bernoulli(params.flip_probability);
    const auto placed = place_foreground(fg, p, params.crop);
    if (std::any_of(placed.alpha.vec().begin(), placed.alpha.vec().end(), [](float a) { return a > 0.5f; }))
      return p;
  }
  fail(ErrorCode::Numeric, "no placement of foreground '" + fg.id + "' keeps alpha above 0.5 after " +
                               std::to_string(params.placement_tries) + " tries");
}

namespace {

std::vector<fs::path> png_files(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::NotFound, "asset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::vector<ForegroundAsset> load_foregrounds(const fs::path& dir) {
  std::vector<ForegroundAsset> out;
  for (const auto& f : png_files(dir)) {
    auto [color, alpha] = load_rgba(f);
    const bool visible =
        std::any_of(alpha.vec().begin(), alpha.vec().end(), [](float a) { return a > 0.0f; });
    require(visible, ErrorCode::Format, "foreground has empty alpha: " + f.string());
    out.push_back({f.stem().string(), std::move(color), std::move(alpha)});
  }
  return out;
}

std::vector<BackgroundAsset> load_backgrounds(const fs::path& dir) {
  std::vector<BackgroundAsset> out;
  for (const auto& f : png_files(dir)) out.push_back({f.stem().string(), load_image(f)});
  return out;
}

std::vector<ManifestEntry> generate_manifest(const std::vector<ForegroundAsset>& fgs,
                                             const std::vector<BackgroundAsset>& bgs, std::size_t n,
                                             std::uint64_t seed, const SynthParams& params) {
  require(!fgs.empty(), ErrorCode::InvalidArgument, "foreground pool is empty");
  require(!bgs.empty(), ErrorCode::InvalidArgument, "background pool is empty");
  Rng rng(seed);
  std::vector<ManifestEntry> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& fg = fgs[rng.uniform_int(0, static_cast<std::int64_t>(fgs.size()) - 1)];
    const auto& bg = bgs[rng.uniform_int(0, static_cast<std::int64_t>(bgs.size()) - 1)];
    ManifestEntry e;
    e.fg = fg.id;
    e.bg = bg.id;
    e.placement = sample_placement(fg, rng, params);
    e.seed = rng.next_u64();
    out.push_back(std::move(e));
  }
  return out;
}

std::string manifest_line(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["fg"] = e.fg;
  j["bg"] = e.bg;
  j["scale"] = e.placement.scale;
  j["dx"] = e.placement.dx;
  j["dy"] = e.placement.dy;
  j["flip"] = e.placement.flip;
  j["seed"] = e.seed;
  return j.dump();
}

ManifestEntry parse_manifest_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.fg = j.at("fg").get<std::string>();
    e.bg = j.at("bg").get<std::string>();
    e.placement.scale = j.at("scale").get<double>();
    e.placement.dx = j.at("dx").get<int>();
    e.placement.dy = j.at("dy").get<int>();
    e.placement.flip = j.at("flip").get<bool>();
    e.seed = j.at("seed").get<std::uint64_t>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::Format, std::string("bad manifest line: ") + ex.what());
  }
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write manifest " + path.string());
  for (const auto& e : entries) out << manifest_line(e) << '\n';
  if (!out) fail(ErrorCode::Io, "manifest write failed: " + path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_manifest_line(line));
  }
  return out;
}

AssetPool::AssetPool(std::vector<ForegroundAsset> fgs, std::vector<BackgroundAsset> bgs)
    : fgs_(std::move(fgs)), bgs_(std::move(bgs)) {}

AssetPool AssetPool::load(const fs::path& fg_dir, const fs::path& bg_dir) {
  return AssetPool(load_foregrounds(fg_dir), load_backgrounds(bg_dir));
}

const ForegroundAsset& AssetPool::foreground(const std::string& id) const {
  for (const auto& f : fgs_)
    if (f.id == id) return f;
  fail(ErrorCode::NotFound, "unknown foreground id '" + id + "'");
}

const BackgroundAsset& AssetPool::background(const std::string& id) const {
  for (const auto& b : bgs_)
    if (b.id == id) return b;
  fail(ErrorCode::NotFound, "unknown background id '" + id + "'");
}

CompositeSample AssetPool::render(const ManifestEntry& e, int crop) const {
  return composite(foreground(e.fg), background(e.bg), e.placement, e.seed, crop);
}

std::string sample_id(std::size_t index) {
  std::string s = std::to_string(index);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

void render_dataset(const AssetPool& pool, const std::vector<ManifestEntry>& entries, const fs::path& out_dir,
                    int crop) {
  for (const char* sub : {"images", "masks", "alphas"}) fs::create_directories(out_dir / sub);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto s = pool.render(entries[i], crop);
    const std::string id = sample_id(i) + ".png";
    save_image(s.image, out_dir / "images" / id);
    save_mask(s.mask, out_dir / "masks" / id);
    save_mask(SoftMask(s.alpha.height(), s.alpha.width(), s.alpha.vec()), out_dir / "alphas" / id);
  }
}

// ---------------------------------------------------------------------------
// Procedural asset pack

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// Smoothly interpolated lattice noise in [0, 1].
class ValueNoise {
 public:
  ValueNoise(int size, int cell, Rng& rng) : cell_(cell), n_(size / cell + 2) {
    lattice_.resize(static_cast<std::size_t>(n_) * n_);
    for (auto& v : lattice_) v = rng.uniform();
  }
  double operator()(double y, double x) const {
    const double gy = y / cell_, gx = x / cell_;
    const int iy = static_cast<int>(gy), ix = static_cast<int>(gx);
    const double fy = smoothstep(gy - iy), fx = smoothstep(gx - ix);
    auto at = [&](int r, int c) { return lattice_[static_cast<std::size_t>(std::min(r, n_ - 1)) * n_ + std::min(c, n_ - 1)]; };
    const double top = at(iy, ix) * (1 - fx) + at(iy, ix + 1) * fx;
    const double bot = at(iy + 1, ix) * (1 - fx) + at(iy + 1, ix + 1) * fx;
    return top * (1 - fy) + bot * fy;
  }

 private:
  int cell_;
  int n_;
  std::vector<double> lattice_;
};

double segment_distance(double py, double px, double ay, double ax, double by, double bx) {
  const double vy = by - ay, vx = bx - ax;
  const double len2 = vy * vy + vx * vx;
  double t = len2 > 0 ? ((py - ay) * vy + (px - ax) * vx) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dy = py - (ay + t * vy), dx = px - (ax + t * vx);
  return std::sqrt(dy * dy + dx * dx);
}

// Alpha of a radial-harmonic blob with a soft rim.
void draw_blob(AlphaMatte& alpha, double cy, double cx, double r0, double max_r, double softness, Rng& rng) {
  std::array<double, 6> amp{}, phase{};
  for (int k = 2; k < 6; ++k) {
    amp[k] = rng.uniform(0.0, 0.25) / (k - 1);
    phase[k] = rng.uniform(0.0, 2 * std::numbers::pi);
  }
  for (int y = 0; y < alpha.height(); ++y)
    for (int x = 0; x < alpha.width(); ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      const double theta = std::atan2(dy, dx);
      double r = r0;
      for (int k = 2; k < 6; ++k) r += r0 * amp[k] * std::cos(k * theta + phase[k]);
      r = std::min(r, max_r);
      const double a = smoothstep((r - std::hypot(dy, dx)) / softness + 0.5);
      alpha.at(y, x) = std::max(alpha.at(y, x), static_cast<float>(a));
    }
}

void draw_strands(AlphaMatte& alpha, double cy, double cx, int size, Rng& rng) {
  const int count = static_cast<int>(rng.uniform_int(5, 12));
  const double margin = 4.0;
  for (int s = 0; s < count; ++s) {
    double angle = rng.uniform(0.0, 2 * std::numbers::pi);
    const double width = rng.uniform(3.5, 6.0);
    const double opacity = rng.uniform(0.8, 1.0);
    const int segments = static_cast<int>(rng.uniform_int(4, 8));
    double py = cy, px = cx;
    for (int k = 0; k < segments; ++k) {
      angle += rng.uniform(-0.5, 0.5);
      const double step = rng.uniform(6.0, 10.0);
      const double ny = std::clamp(py + step * std::sin(angle), margin, size - margin);
      const double nx = std::clamp(px + step * std::cos(angle), margin, size - margin);
      const int y0 = std::max(0, static_cast<int>(std::min(py, ny) - width - 1));
      const int y1 = std::min(size - 1, static_cast<int>(std::max(py, ny) + width + 1));
      const int x0 = std::max(0, static_cast<int>(std::min(px, nx) - width - 1));
      const int x1 = std::min(size - 1, static_cast<int>(std::max(px, nx) + width + 1));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d = segment_distance(y + 0.5, x + 0.5, py, px, ny, nx);
          const double a = opacity * std::clamp(width / 2 - d + 0.5, 0.0, 1.0);
          alpha.at(y, x) = std::max(alpha.at(y, x), static_cast<float>(a));
        }
      py = ny;
      px = nx;
    }
  }
}

void draw_checker_holed(AlphaMatte& alpha, int size, Rng& rng) {
  const double half = rng.uniform(0.3, 0.42) * size;
  const double c = size / 2.0;
  const double exponent = rng.uniform(2.0, 6.0);  // superellipse: 2 = disc, large = square
  const double cell = rng.uniform(10.0, 18.0);
  const double hole = rng.uniform(0.35, 0.55);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = std::abs(y + 0.5 - c) / half, v = std::abs(x + 0.5 - c) / half;
      const double rho = std::pow(std::pow(u, exponent) + std::pow(v, exponent), 1.0 / exponent);
      double a = smoothstep((1.0 - rho) * half + 0.5);
      const int cy = static_cast<int>(std::floor((y + 0.5) / cell));
      const int cx = static_cast<int>(std::floor((x + 0.5) / cell));
      if ((cy + cx) % 2 == 0) {
        const double fy = std::fmod(y + 0.5, cell) / cell - 0.5, fx = std::fmod(x + 0.5, cell) / cell - 0.5;
        if (std::abs(fy) < hole / 2 && std::abs(fx) < hole / 2) a = 0.0;
      }
      alpha.at(y, x) = static_cast<float>(a);
    }
}

void paint_foreground(Image& color, Rng& rng) {
  const Rgb base = hsv(rng.uniform(), rng.uniform(0.6, 1.0), rng.uniform(0.55, 1.0));
  const Rgb tint = hsv(rng.uniform(), rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0));
  const double angle = rng.uniform(0.0, 2 * std::numbers::pi);
  const double gy = std::sin(angle), gx = std::cos(angle);
  const int size = color.height();
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < color.width(); ++x) {
      const double t = 0.5 + 0.5 * ((y - size / 2.0) * gy + (x - size / 2.0) * gx) / (size / 2.0);
      const double mix = 0.3 * std::clamp(t, 0.0, 1.0);
      const double grain = rng.uniform(-0.03, 0.03);
      for (int ch = 0; ch < 3; ++ch)
        color.at(y, x, ch) = static_cast<float>(std::clamp((1 - mix) * base[ch] + mix * tint[ch] + grain, 0.0, 1.0));
    }
}

// Tight crop around the visible alpha plus a transparent margin.
ForegroundAsset crop_to_alpha(const ForegroundAsset& a, int margin) {
  int y0 = a.alpha.height(), y1 = -1, x0 = a.alpha.width(), x1 = -1;
  for (int y = 0; y < a.alpha.height(); ++y)
    for (int x = 0; x < a.alpha.width(); ++x)
      if (a.alpha.at(y, x) > 0.0f) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
  if (y1 < 0) return a;
  y0 = std::max(0, y0 - margin);
  x0 = std::max(0, x0 - margin);
  y1 = std::min(a.alpha.height() - 1, y1 + margin);
  x1 = std::min(a.alpha.width() - 1, x1 + margin);
  ForegroundAsset out{a.id, Image(y1 - y0 + 1, x1 - x0 + 1), AlphaMatte(y1 - y0 + 1, x1 - x0 + 1)};
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      out.alpha.at(y - y0, x - x0) = a.alpha.at(y, x);
      for (int c = 0; c < 3; ++c) out.color.at(y - y0, x - x0, c) = a.color.at(y, x, c);
    }
  return out;
}

}  // namespace

std::vector<ForegroundAsset> make_procedural_foregrounds(int count, int size, std::uint64_t seed) {
  require(count >= 0 && size >= 16, ErrorCode::InvalidArgument, "asset pack needs size >= 16");
  std::vector<ForegroundAsset> out;
  Rng root(seed);
  static const char* kinds[] = {"blob", "strands", "holed"};
  for (int i = 0; i < count; ++i) {
    Rng rng = root.fork();
    const int kind = i % 3;
    ForegroundAsset a;
    a.id = "fg_" + std::string(3 - std::min<std::size_t>(3, std::to_string(i).size()), '0') + std::to_string(i) +
           "_" + kinds[kind];
    a.color = Image(size, size);
    a.alpha = AlphaMatte(size, size);
    const double c = size / 2.0;
    if (kind == 0) {
      draw_blob(a.alpha, c + rng.uniform(-4, 4), c + rng.uniform(-4, 4), rng.uniform(0.25, 0.36) * size,
                0.45 * size, rng.uniform(1.0, 4.0), rng);
    } else if (kind == 1) {
      draw_blob(a.alpha, c, c, rng.uniform(0.12, 0.2) * size, 0.3 * size, 1.5, rng);
      draw_strands(a.alpha, c, c, size, rng);
    } else {
      draw_checker_holed(a.alpha, size, rng);
    }
    paint_foreground(a.color, rng);
    out.push_back(crop_to_alpha(a, 2));
  }
  return out;
}

std::vector<BackgroundAsset> make_procedural_backgrounds(int count, int size, std::uint64_t seed) {
  require(count >= 0 && size >= 16, ErrorCode::InvalidArgument, "asset pack needs size >= 16");
  std::vector<BackgroundAsset> out;
  Rng root(seed);
  static const char* kinds[] = {"noise", "stripes", "checker", "gradient"};
  for (int i = 0; i < count; ++i) {
    Rng rng = root.fork();
    const int kind = i % 4;
    BackgroundAsset b;
    b.id = "bg_" + std::string(3 - std::min<std::size_t>(3, std::to_string(i).size()), '0') + std::to_string(i) +
           "_" + kinds[kind];
    b.image = Image(size, size);
    const Rgb c0 = hsv(rng.uniform(), rng.uniform(0.0, 0.4), rng.uniform(0.2, 0.9));
    const Rgb c1 = hsv(rng.uniform(), rng.uniform(0.0, 0.4), rng.uniform(0.2, 0.9));
    ValueNoise coarse(size, static_cast<int>(rng.uniform_int(12, 32)), rng);
    ValueNoise fine(size, static_cast<int>(rng.uniform_int(3, 6)), rng);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double period = rng.uniform(6.0, 20.0);
    const double cell = rng.uniform(6.0, 16.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double t = 0;
        const double along = y * std::sin(angle) + x * std::cos(angle);
        switch (kind) {
          case 0: t = 0.65 * coarse(y, x) + 0.35 * fine(y, x); break;
          case 1: t = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * along / period); break;
          case 2: t = ((static_cast<int>(y / cell) + static_cast<int>(x / cell)) % 2) ? 0.85 : 0.15; break;
          default: t = std::clamp(along / (1.4 * size), 0.0, 1.0); break;
        }
        t = std::clamp(t + 0.15 * (fine(y, x) - 0.5), 0.0, 1.0);
        for (int ch = 0; ch < 3; ++ch)
          b.image.at(y, x, ch) = static_cast<float>(std::clamp((1 - t) * c0[ch] + t * c1[ch], 0.0, 1.0));
      }
    out.push_back(std::move(b));
  }
  return out;
}

void write_asset_pack(const fs::path& dir, int fg_count, int bg_count, int size, std::uint64_t seed) {
  fs::create_directories(dir / "fg");
  fs::create_directories(dir / "bg");
  for (const auto& f : make_procedural_foregrounds(fg_count, size, seed))
    save_rgba(f.color, f.alpha, dir / "fg" / (f.id + ".png"));
  for (const auto& b : make_procedural_backgrounds(bg_count, size, Rng::mix(seed)))
    save_image(b.image, dir / "bg" / (b.id + ".png"));
}

}  // namespace clickseg
