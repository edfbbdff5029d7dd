#pragma once

// Synthetic composites: a foreground (color + alpha matte) is scaled, placed
// and optionally mirrored inside a crop of a background texture, then
//
//   C = alpha * F + (1 - alpha) * B,   mask = binarize(alpha, 0.5)
//
// computed in stored (gamma-coded) RGB. A manifest line fully determines one
// sample; the line's seed only picks the background crop window.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "clickseg/image.hpp"
#include "clickseg/rng.hpp"

namespace clickseg {

struct ForegroundAsset {
  std::string id;
  Image color;
  AlphaMatte alpha;
};

struct BackgroundAsset {
  std::string id;
  Image image;
};

struct Placement {
  double scale = 1.0;  // longer foreground side as a fraction of the crop
  int dx = 0;          // top-left of the scaled foreground inside the crop
  int dy = 0;
  bool flip = false;

  bool operator==(const Placement&) const = default;
};

struct ManifestEntry {
  std::string fg;
  std::string bg;
  Placement placement;
  std::uint64_t seed = 0;

  bool operator==(const ManifestEntry&) const = default;
};

struct CompositeSample {
  Image image;
  AlphaMatte alpha;
  BinaryMask mask;
  ManifestEntry provenance;
};

struct SynthParams {
  int crop = 96;
  double scale_min = 0.4;
  double scale_max = 1.0;
  double flip_probability = 0.5;
  int placement_tries = 10;
};

// Size of the foreground after scaling (height, width), each at least 1.
std::pair<int, int> scaled_extent(const ForegroundAsset& fg, double scale, int crop);

// Foreground color and alpha resampled into crop coordinates. Alpha is zero
// outside the placed foreground; color outside it is undefined but finite.
struct PlacedForeground {
  Image color;
  AlphaMatte alpha;
};
PlacedForeground place_foreground(const ForegroundAsset& fg, const Placement& placement, int crop);

// The crop x crop window of the background selected by `seed` (edge
// replication when the background is smaller than the crop).
Image background_window(const Image& bg, int crop, std::uint64_t seed);

CompositeSample composite(const ForegroundAsset& fg, const BackgroundAsset& bg, const Placement& placement,
                          std::uint64_t seed, int crop = 96);

// Draws a placement whose transformed alpha has at least one pixel > 0.5.
// Throws after params.placement_tries failures.
Placement sample_placement(const ForegroundAsset& fg, Rng& rng, const SynthParams& params);

std::vector<ForegroundAsset> load_foregrounds(const std::filesystem::path& dir);
std::vector<BackgroundAsset> load_backgrounds(const std::filesystem::path& dir);

std::vector<ManifestEntry> generate_manifest(const std::vector<ForegroundAsset>& fgs,
                                             const std::vector<BackgroundAsset>& bgs, std::size_t n,
                                             std::uint64_t seed, const SynthParams& params = {});

std::string manifest_line(const ManifestEntry& e);
ManifestEntry parse_manifest_line(const std::string& line);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Looks up the entry's assets by id and renders it.
class AssetPool {
 public:
  AssetPool(std::vector<ForegroundAsset> fgs, std::vector<BackgroundAsset> bgs);
  static AssetPool load(const std::filesystem::path& fg_dir, const std::filesystem::path& bg_dir);

  const std::vector<ForegroundAsset>& foregrounds() const noexcept { return fgs_; }
  const std::vector<BackgroundAsset>& backgrounds() const noexcept { return bgs_; }
  const ForegroundAsset& foreground(const std::string& id) const;
  const BackgroundAsset& background(const std::string& id) const;

  CompositeSample render(const ManifestEntry& e, int crop = 96) const;

 private:
  std::vector<ForegroundAsset> fgs_;
  std::vector<BackgroundAsset> bgs_;
};

// Writes images/<id>.png and masks/<id>.png (plus alphas/<id>.png) for
// every manifest line; ids are the zero-padded line numbers.
void render_dataset(const AssetPool& pool, const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& out_dir, int crop = 96);
std::string sample_id(std::size_t index);

// Procedural asset pack: soft-edged blobs, thin strands and checker-holed
// shapes as RGBA foregrounds; noise, stripe, checker and gradient textures
// as backgrounds. Deterministic in `seed`.
std::vector<ForegroundAsset> make_procedural_foregrounds(int count, int size, std::uint64_t seed);
std::vector<BackgroundAsset> make_procedural_backgrounds(int count, int size, std::uint64_t seed);
void write_asset_pack(const std::filesystem::path& dir, int fg_count, int bg_count, int size,
                      std::uint64_t seed);

}  // namespace clickseg
