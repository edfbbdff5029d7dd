#include "clickseg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace clickseg {

namespace fs = std::filesystem;

Image::Image(int height, int width, float fill)
    : height_(height), width_(width) {
  require(height >= 0 && width >= 0, ErrorCode::Shape, "negative image dimension");
  data_.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
}

Image::Image(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  require(height >= 0 && width >= 0, ErrorCode::Shape, "negative image dimension");
  require(data_.size() == static_cast<std::size_t>(height) * width * kChannels,
          ErrorCode::Shape, "image data length does not match dimensions");
}

namespace {

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::Io, "read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->offset + length > state->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, state->bytes.data() + state->offset, length);
  state->offset += length;
}

void png_error_callback(png_structp, png_const_charp message) {
  throw Error(ErrorCode::Format, std::string("PNG decode: ") + message);
}

void png_warning_callback(png_structp, png_const_charp) {}

void png_write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_callback(png_structp) {}

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

bool is_pnm(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6');
}

RasterFile decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space_and_comments();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000) fail(ErrorCode::Format, "PNM header value too large");
      ++pos;
      any = true;
    }
    if (!any) fail(ErrorCode::Format, "malformed PNM header");
    return static_cast<int>(v);
  };
  RasterFile r;
  r.channels = bytes[1] == '5' ? 1 : 3;
  r.width = read_int();
  r.height = read_int();
  r.max_value = read_int();
  if (r.max_value <= 0 || r.max_value > 65535) fail(ErrorCode::Format, "PNM maxval out of range");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail(ErrorCode::Format, "malformed PNM header");
  ++pos;
  const std::size_t count = static_cast<std::size_t>(r.width) * r.height * r.channels;
  const std::size_t bps = r.max_value > 255 ? 2 : 1;
  if (bytes.size() - pos < count * bps) fail(ErrorCode::Format, "truncated PNM data");
  r.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    r.samples[i] = bps == 2
        ? static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1])
        : bytes[pos + i];
  }
  return r;
}

}  // namespace

RasterFile decode_png(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) fail(ErrorCode::Format, "not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_callback, png_warning_callback);
  if (!png) fail(ErrorCode::Internal, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::Internal, "png_create_info_struct failed");
  }
  PngReadState state{bytes, 0};
  RasterFile r;
  try {
    png_set_read_fn(png, &state, png_read_callback);
    png_read_info(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // host order on little-endian
    png_read_update_info(png, info);
    r.width = static_cast<int>(png_get_image_width(png, info));
    r.height = static_cast<int>(png_get_image_height(png, info));
    r.channels = png_get_channels(png, info);
    const int depth = png_get_bit_depth(png, info);
    r.max_value = depth == 16 ? 65535 : 255;
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> buffer(rowbytes * r.height);
    std::vector<png_bytep> rows(r.height);
    for (int y = 0; y < r.height; ++y) rows[y] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    const std::size_t count = static_cast<std::size_t>(r.width) * r.height * r.channels;
    r.samples.resize(count);
    if (depth == 16) {
      for (int y = 0; y < r.height; ++y) {
        const auto* row = buffer.data() + rowbytes * y;
        for (std::size_t i = 0; i < static_cast<std::size_t>(r.width) * r.channels; ++i) {
          std::uint16_t v;
          std::memcpy(&v, row + 2 * i, 2);
          r.samples[static_cast<std::size_t>(y) * r.width * r.channels + i] = v;
        }
      }
    } else {
      for (int y = 0; y < r.height; ++y) {
        const auto* row = buffer.data() + rowbytes * y;
        for (std::size_t i = 0; i < static_cast<std::size_t>(r.width) * r.channels; ++i)
          r.samples[static_cast<std::size_t>(y) * r.width * r.channels + i] = row[i];
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return r;
}

std::vector<std::uint8_t> encode_png(int height, int width, int channels,
                                     std::span<const std::uint8_t> samples) {
  require(channels >= 1 && channels <= 4, ErrorCode::InvalidArgument, "bad channel count");
  require(samples.size() == static_cast<std::size_t>(height) * width * channels,
          ErrorCode::Shape, "sample buffer does not match PNG dimensions");
  require(height > 0 && width > 0, ErrorCode::Shape, "cannot encode empty PNG");
  static constexpr int kColorTypes[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA,
                                        PNG_COLOR_TYPE_RGB, PNG_COLOR_TYPE_RGB_ALPHA};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_callback, png_warning_callback);
  if (!png) fail(ErrorCode::Internal, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::Internal, "png_create_info_struct failed");
  }
  std::vector<std::uint8_t> out;
  try {
    png_set_write_fn(png, &out, png_write_callback, png_flush_callback);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 kColorTypes[channels - 1], PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
      auto* row = const_cast<std::uint8_t*>(samples.data() +
                                            static_cast<std::size_t>(y) * width * channels);
      png_write_row(png, row);
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

std::vector<std::uint8_t> encode_png_gray8(int height, int width,
                                           std::span<const std::uint8_t> gray) {
  return encode_png(height, width, 1, gray);
}

RasterFile read_raster(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  RasterFile r;
  if (is_png(bytes)) {
    r = decode_png(bytes);
  } else if (is_pnm(bytes)) {
    r = decode_pnm(bytes);
  } else {
    fail(ErrorCode::Format, "unsupported image format: " + path.string());
  }
  if (r.width <= 0 || r.height <= 0) fail(ErrorCode::Format, "zero-sized image: " + path.string());
  return r;
}

Image image_from_raster(const RasterFile& r) {
  require(r.width > 0 && r.height > 0, ErrorCode::Format, "zero-sized image");
  Image img(r.height, r.width);
  const float scale = 1.0f / static_cast<float>(r.max_value);
  const std::size_t n = static_cast<std::size_t>(r.width) * r.height;
  auto out = img.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint16_t* s = r.samples.data() + i * r.channels;
    for (int c = 0; c < 3; ++c) {
      const std::uint16_t v = r.channels >= 3 ? s[c] : s[0];
      out[i * 3 + c] = static_cast<float>(v) * scale;
    }
  }
  return img;
}

SoftMask soft_mask_from_raster(const RasterFile& r) {
  require(r.width > 0 && r.height > 0, ErrorCode::Format, "zero-sized mask");
  SoftMask m(r.height, r.width);
  const float scale = 1.0f / static_cast<float>(r.max_value);
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = static_cast<float>(r.samples[i * r.channels]) * scale;
  return m;
}

Image load_image(const fs::path& path) { return image_from_raster(read_raster(path)); }

SoftMask load_soft_mask(const fs::path& path) {
  return soft_mask_from_raster(read_raster(path));
}

BinaryMask load_binary_mask(const fs::path& path) {
  const RasterFile r = read_raster(path);
  BinaryMask m(r.height, r.width);
  // Anything at or above half scale counts as foreground; 8-bit masks written
  // by this library are exactly 0 or 255.
  const int half = (r.max_value + 1) / 2;
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = r.samples[i * r.channels] >= half ? 1 : 0;
  return m;
}

std::pair<Image, AlphaMatte> load_rgba(const fs::path& path) {
  const RasterFile r = read_raster(path);
  Image color = image_from_raster(r);
  AlphaMatte alpha(r.height, r.width, 1.0f);
  if (r.channels == 2 || r.channels == 4) {
    const float scale = 1.0f / static_cast<float>(r.max_value);
    for (std::size_t i = 0; i < alpha.size(); ++i)
      alpha[i] = static_cast<float>(r.samples[i * r.channels + r.channels - 1]) * scale;
  }
  return {std::move(color), std::move(alpha)};
}

namespace {

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

void save_image(const Image& image, const fs::path& path) {
  std::vector<std::uint8_t> samples(image.data().size());
  std::transform(image.data().begin(), image.data().end(), samples.begin(), quantize);
  write_file_bytes(path, encode_png(image.height(), image.width(), 3, samples));
}

void save_rgba(const Image& color, const AlphaMatte& alpha, const fs::path& path) {
  require(color.same_shape(alpha), ErrorCode::Shape, "color/alpha dimension mismatch");
  const std::size_t n = alpha.size();
  std::vector<std::uint8_t> samples(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) samples[i * 4 + c] = quantize(color.data()[i * 3 + c]);
    samples[i * 4 + 3] = quantize(alpha[i]);
  }
  write_file_bytes(path, encode_png(color.height(), color.width(), 4, samples));
}

std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask) {
  std::vector<std::uint8_t> gray(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) gray[i] = mask[i] ? 255 : 0;
  return encode_png_gray8(mask.height(), mask.width(), gray);
}

std::vector<std::uint8_t> encode_mask_png(const SoftMask& mask) {
  std::vector<std::uint8_t> gray(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) gray[i] = quantize(mask[i]);
  return encode_png_gray8(mask.height(), mask.width(), gray);
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
  write_file_bytes(path, encode_mask_png(mask));
}

void save_mask(const SoftMask& mask, const fs::path& path) {
  write_file_bytes(path, encode_mask_png(mask));
}

std::size_t count_foreground(const BinaryMask& m) {
  return static_cast<std::size_t>(std::count_if(m.vec().begin(), m.vec().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

SoftMask to_soft(const BinaryMask& m) {
  SoftMask s(m.height(), m.width());
  for (std::size_t i = 0; i < m.size(); ++i) s[i] = m[i] ? 1.0f : 0.0f;
  return s;
}

std::vector<double> luminance(const Image& image) {
  const std::size_t n = static_cast<std::size_t>(image.height()) * image.width();
  std::vector<double> out(n);
  const auto d = image.data();
  for (std::size_t i = 0; i < n; ++i)
    out[i] = 0.299 * d[i * 3] + 0.587 * d[i * 3 + 1] + 0.114 * d[i * 3 + 2];
  return out;
}

namespace {

struct Tap {
  int i0, i1;
  float w1;
};

std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int o = 0; o < dst; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    taps[o] = {i0, i1, static_cast<float>(s - i0)};
  }
  return taps;
}

}  // namespace

Image resize_bilinear(const Image& image, int height, int width) {
  require(height > 0 && width > 0 && image.height() > 0 && image.width() > 0, ErrorCode::Shape,
          "resize of empty image");
  const auto ty = bilinear_taps(image.height(), height);
  const auto tx = bilinear_taps(image.width(), width);
  Image out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Tap& a = ty[y];
      const Tap& b = tx[x];
      for (int c = 0; c < 3; ++c) {
        const float top = image.at(a.i0, b.i0, c) * (1 - b.w1) + image.at(a.i0, b.i1, c) * b.w1;
        const float bot = image.at(a.i1, b.i0, c) * (1 - b.w1) + image.at(a.i1, b.i1, c) * b.w1;
        out.at(y, x, c) = top * (1 - a.w1) + bot * a.w1;
      }
    }
  }
  return out;
}

SoftMask resize_bilinear(const SoftMask& mask, int height, int width) {
  require(height > 0 && width > 0 && !mask.empty(), ErrorCode::Shape, "resize of empty mask");
  const auto ty = bilinear_taps(mask.height(), height);
  const auto tx = bilinear_taps(mask.width(), width);
  SoftMask out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Tap& a = ty[y];
      const Tap& b = tx[x];
      const float top = mask.at(a.i0, b.i0) * (1 - b.w1) + mask.at(a.i0, b.i1) * b.w1;
      const float bot = mask.at(a.i1, b.i0) * (1 - b.w1) + mask.at(a.i1, b.i1) * b.w1;
      out.at(y, x) = top * (1 - a.w1) + bot * a.w1;
    }
  }
  return out;
}

Image pad_edge(const Image& image, int height, int width) {
  const int h = std::max(height, image.height());
  const int w = std::max(width, image.width());
  if (h == image.height() && w == image.width()) return image;
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = image.at(std::min(y, image.height() - 1), std::min(x, image.width() - 1), c);
  return out;
}

BinaryMask pad_edge(const BinaryMask& mask, int height, int width) {
  const int h = std::max(height, mask.height());
  const int w = std::max(width, mask.width());
  if (h == mask.height() && w == mask.width()) return mask;
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(y, x) = mask.at(std::min(y, mask.height() - 1), std::min(x, mask.width() - 1));
  return out;
}

Augmented apply_augmentation(const Image& image, const BinaryMask& gt, const AugmentTrace& trace,
                             int crop_height, int crop_width) {
  require(image.same_shape(gt), ErrorCode::Shape, "image/mask dimension mismatch");
  require(trace.crop_y >= 0 && trace.crop_x >= 0 && trace.crop_y + crop_height <= image.height() &&
              trace.crop_x + crop_width <= image.width(),
          ErrorCode::InvalidArgument, "crop window outside image");
  Augmented out{Image(crop_height, crop_width), BinaryMask(crop_height, crop_width), trace};
  const float gamma = static_cast<float>(trace.gamma);
  const float bright = static_cast<float>(trace.brightness);
  const bool identity_tone = trace.gamma == 1.0 && trace.brightness == 1.0;
  for (int y = 0; y < crop_height; ++y) {
    for (int x = 0; x < crop_width; ++x) {
      const int sy = trace.crop_y + y;
      const int cx = trace.crop_x + x;
      const int sx = trace.flipped ? image.width() - 1 - cx : cx;
      out.mask.at(y, x) = gt.at(sy, sx);
      for (int c = 0; c < 3; ++c) {
        float v = image.at(sy, sx, c);
        if (!identity_tone) v = std::clamp(std::pow(v, gamma) * bright, 0.0f, 1.0f);
        out.image.at(y, x, c) = v;
      }
    }
  }
  return out;
}

Augmented augment(const Image& image, const BinaryMask& gt, Rng& rng, const AugmentParams& p) {
  require(image.same_shape(gt), ErrorCode::Shape, "image/mask dimension mismatch");
  require(p.crop_height > 0 && p.crop_width > 0, ErrorCode::InvalidArgument, "crop size must be positive");
  require(count_foreground(gt) > 0, ErrorCode::InvalidArgument, "ground truth is empty: no object to segment");

  const Image src = pad_edge(image, p.crop_height, p.crop_width);
  const BinaryMask mask = pad_edge(gt, p.crop_height, p.crop_width);

  AugmentTrace t;
  t.flipped = rng.bernoulli(p.flip_probability);
  t.gamma = rng.uniform(p.gamma_min, p.gamma_max);
  t.brightness = rng.uniform(p.brightness_min, p.brightness_max);

  const int max_y = src.height() - p.crop_height;
  const int max_x = src.width() - p.crop_width;
  // Foreground test in the flipped frame: column cx maps to source W-1-cx.
  auto window_has_foreground = [&](int y0, int x0) {
    for (int y = y0; y < y0 + p.crop_height; ++y)
      for (int x = x0; x < x0 + p.crop_width; ++x) {
        const int sx = t.flipped ? mask.width() - 1 - x : x;
        if (mask.at(y, sx)) return true;
      }
    return false;
  };

  bool found = false;
  for (int attempt = 0; attempt < p.crop_retries && !found; ++attempt) {
    t.crop_y = static_cast<int>(rng.uniform_int(0, max_y));
    t.crop_x = static_cast<int>(rng.uniform_int(0, max_x));
    found = window_has_foreground(t.crop_y, t.crop_x);
  }
  if (!found) {
    std::vector<std::pair<int, int>> fg;
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x) {
        const int sx = t.flipped ? mask.width() - 1 - x : x;
        if (mask.at(y, sx)) fg.emplace_back(y, x);
      }
    const auto [fy, fx] = fg[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(fg.size()) - 1))];
    t.crop_y = std::clamp(fy - p.crop_height / 2, 0, max_y);
    t.crop_x = std::clamp(fx - p.crop_width / 2, 0, max_x);
    t.used_fallback = true;
  }
  return apply_augmentation(src, mask, t, p.crop_height, p.crop_width);
}

}  // namespace clickseg
