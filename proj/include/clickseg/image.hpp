#pragma once

// Raster containers, PNG/PNM I/O and training augmentations.
//
// Layout convention (repo-wide): row-major; Image is channel-interleaved
// (y, x, c) with 3 channels. All float rasters hold values in [0, 1].

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clickseg/error.hpp"
#include "clickseg/rng.hpp"

namespace clickseg {

template <typename T, typename Tag>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(checked_area(height, width)), fill) {}
  Grid(int height, int width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {
    require(data_.size() == static_cast<std::size_t>(checked_area(height, width)),
            ErrorCode::Shape, "grid data length does not match dimensions");
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(int y, int x) { return data_[index(y, x)]; }
  const T& at(int y, int x) const { return data_[index(y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  bool same_shape(int h, int w) const noexcept { return h == height_ && w == width_; }
  template <typename G>
  bool same_shape(const G& o) const noexcept {
    return o.height() == height_ && o.width() == width_;
  }

  bool operator==(const Grid&) const = default;

 private:
  static long checked_area(int h, int w) {
    require(h >= 0 && w >= 0, ErrorCode::Shape, "negative raster dimension");
    return static_cast<long>(h) * w;
  }
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

struct SoftMaskTag {};
struct AlphaMatteTag {};
struct BinaryMaskTag {};

using SoftMask = Grid<float, SoftMaskTag>;
using AlphaMatte = Grid<float, AlphaMatteTag>;
using BinaryMask = Grid<std::uint8_t, BinaryMaskTag>;

// RGB raster, interleaved.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, float fill = 0.0f);
  Image(int height, int width, std::vector<float> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return kChannels; }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  template <typename G>
  bool same_shape(const G& o) const noexcept {
    return o.height() == height_ && o.width() == width_;
  }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * kChannels + static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Raw decoded samples, before normalization.
struct RasterFile {
  int height = 0;
  int width = 0;
  int channels = 0;       // 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
  int max_value = 255;    // 255 or 65535
  std::vector<std::uint16_t> samples;  // interleaved
};

RasterFile read_raster(const std::filesystem::path& path);
RasterFile decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png_gray8(int height, int width,
                                           std::span<const std::uint8_t> gray);
std::vector<std::uint8_t> encode_png(int height, int width, int channels,
                                     std::span<const std::uint8_t> samples);

Image load_image(const std::filesystem::path& path);
Image image_from_raster(const RasterFile& raster);
// Mask files are grayscale; color files are reduced to their first channel.
SoftMask load_soft_mask(const std::filesystem::path& path);
SoftMask soft_mask_from_raster(const RasterFile& raster);
BinaryMask load_binary_mask(const std::filesystem::path& path);

// Foreground color + alpha from an RGBA (or gray+alpha) file. Files without
// an alpha channel get alpha = 1 everywhere.
std::pair<Image, AlphaMatte> load_rgba(const std::filesystem::path& path);

void save_image(const Image& image, const std::filesystem::path& path);
void save_rgba(const Image& color, const AlphaMatte& alpha, const std::filesystem::path& path);
// Binary masks: 8-bit gray, 255 = foreground.
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);
// Soft masks: 8-bit gray, value round(255 * v).
void save_mask(const SoftMask& mask, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask);
std::vector<std::uint8_t> encode_mask_png(const SoftMask& mask);

// 1 where value > threshold (strict), else 0.
template <typename Tag>
BinaryMask binarize(const Grid<float, Tag>& m, double threshold) {
  require(threshold >= 0.0 && threshold <= 1.0, ErrorCode::InvalidArgument,
          "binarize threshold outside [0,1]");
  BinaryMask out(m.height(), m.width());
  for (std::size_t i = 0; i < m.size(); ++i)
    out[i] = static_cast<double>(m[i]) > threshold ? 1 : 0;
  return out;
}

std::size_t count_foreground(const BinaryMask& m);
SoftMask to_soft(const BinaryMask& m);

// Luminance 0.299 R + 0.587 G + 0.114 B.
std::vector<double> luminance(const Image& image);

// Bilinear sampling with edge clamping, half-pixel centres.
Image resize_bilinear(const Image& image, int height, int width);
SoftMask resize_bilinear(const SoftMask& mask, int height, int width);
// Edge-replicating pad so the result is at least (height, width).
Image pad_edge(const Image& image, int height, int width);
BinaryMask pad_edge(const BinaryMask& mask, int height, int width);

struct AugmentParams {
  int crop_height = 96;
  int crop_width = 96;
  double flip_probability = 0.5;
  double gamma_min = 0.7;
  double gamma_max = 1.5;
  double brightness_min = 0.75;
  double brightness_max = 1.25;
  int crop_retries = 10;
};

// What augment() decided; exposed so tests can check the transform.
struct AugmentTrace {
  bool flipped = false;
  double gamma = 1.0;
  double brightness = 1.0;
  int crop_y = 0;
  int crop_x = 0;
  bool used_fallback = false;
};

struct Augmented {
  Image image;
  BinaryMask mask;
  AugmentTrace trace;
};

Augmented augment(const Image& image, const BinaryMask& gt, Rng& rng,
                  const AugmentParams& params);

// Deterministic building block of augment().
Augmented apply_augmentation(const Image& image, const BinaryMask& gt,
                             const AugmentTrace& trace, int crop_height, int crop_width);

}  // namespace clickseg
