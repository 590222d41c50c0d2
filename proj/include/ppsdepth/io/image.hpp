#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "ppsdepth/grid.hpp"
#include "ppsdepth/io/binary.hpp"

namespace ppsdepth::io {

/// Integer samples as stored in a file: 1 (gray) or 3 (RGB) channels at 8 or 16 bits.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;

  double max_value() const { return bit_depth == 16 ? 65535.0 : 255.0; }
};

inline ImageRGB to_rgb(const Raster& r) {
  ImageRGB img(r.height, r.width);
  const double scale = 1.0 / r.max_value();
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (r.channels == 1) {
      img[i] = Vec3::Constant(r.samples[i] * scale);
    } else {
      img[i] = Vec3(r.samples[3 * i] * scale, r.samples[3 * i + 1] * scale, r.samples[3 * i + 2] * scale);
    }
  }
  return img;
}

/// Single-channel rasters map directly; RGB rasters go through Rec.601 luma.
inline ImageGray to_gray(const Raster& r) {
  ImageGray img(r.height, r.width);
  const double scale = 1.0 / r.max_value();
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (r.channels == 1)
      img[i] = r.samples[i] * scale;
    else
      img[i] = std::clamp(
          (0.299 * r.samples[3 * i] + 0.587 * r.samples[3 * i + 1] + 0.114 * r.samples[3 * i + 2]) * scale, 0.0, 1.0);
  }
  return img;
}

inline std::uint16_t quantize(double v, int bit_depth) {
  const double mx = bit_depth == 16 ? 65535.0 : 255.0;
  const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
  return static_cast<std::uint16_t>(std::lround(c * mx));
}

inline Raster from_rgb(const ImageRGB& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("image: unsupported bit depth " + std::to_string(bit_depth));
  Raster r{img.width(), img.height(), 3, bit_depth, {}};
  r.samples.reserve(img.size() * 3);
  for (const Vec3& px : img)
    for (int c = 0; c < 3; ++c) r.samples.push_back(quantize(px[c], bit_depth));
  return r;
}

inline Raster from_gray(const ImageGray& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("image: unsupported bit depth " + std::to_string(bit_depth));
  Raster r{img.width(), img.height(), 1, bit_depth, {}};
  r.samples.reserve(img.size());
  for (double v : img) r.samples.push_back(quantize(v, bit_depth));
  return r;
}

inline Raster from_mask(const Mask& mask) {
  Raster r{mask.width(), mask.height(), 1, 8, {}};
  for (unsigned char m : mask) r.samples.push_back(m ? 255 : 0);
  return r;
}

// ---------------------------------------------------------------------------
// PNG (libpng)
// ---------------------------------------------------------------------------

namespace detail {

struct PngScratch {
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  char message[256] = {0};
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* scratch = static_cast<PngScratch*>(png_get_error_ptr(png));
  if (scratch) std::snprintf(scratch->message, sizeof(scratch->message), "%s", msg);
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

// Only trivially destructible locals live in this frame, so a longjmp out of
// libpng back to the setjmp below skips no destructors.
inline int png_decode(std::FILE* fp, png_structp png, png_infop info, PngScratch* scratch, Raster* out) {
  if (setjmp(png_jmpbuf(png))) return -1;
  png_init_io(png, fp);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  } else if (depth != 8 && depth != 16) {
    std::snprintf(scratch->message, sizeof(scratch->message), "unsupported bit depth %d", depth);
    return -2;
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out->width = png_get_image_width(png, info);
  out->height = png_get_image_height(png, info);
  out->channels = png_get_channels(png, info);
  out->bit_depth = png_get_bit_depth(png, info);
  if (out->channels != 1 && out->channels != 3) {
    std::snprintf(scratch->message, sizeof(scratch->message), "unsupported channel count %d", out->channels);
    return -2;
  }
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  scratch->pixels.resize(rowbytes * out->height);
  scratch->rows.resize(out->height);
  for (std::size_t y = 0; y < out->height; ++y) scratch->rows[y] = scratch->pixels.data() + y * rowbytes;
  png_read_image(png, scratch->rows.data());
  png_read_end(png, nullptr);
  return 0;
}

inline int png_encode(std::FILE* fp, png_structp png, png_infop info, PngScratch* scratch, const Raster* r) {
  if (setjmp(png_jmpbuf(png))) return -1;
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(r->width), static_cast<png_uint_32>(r->height), r->bit_depth,
               r->channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, scratch->rows.data());
  png_write_end(png, nullptr);
  return 0;
}

}  // namespace detail

inline Raster read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw FormatError("cannot open '" + path + "' for reading");
  detail::PngScratch scratch;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &scratch, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  Raster out;
  const int rc = (png && info) ? detail::png_decode(fp, png, info, &scratch, &out) : -1;
  png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  std::fclose(fp);
  if (rc != 0) throw FormatError(path + ": png: " + (scratch.message[0] ? scratch.message : "decode failed"));
  out.samples.resize(out.width * out.height * static_cast<std::size_t>(out.channels));
  const unsigned char* p = scratch.pixels.data();
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    if (out.bit_depth == 16) {
      out.samples[i] = static_cast<std::uint16_t>((p[0] << 8) | p[1]);
      p += 2;
    } else {
      out.samples[i] = *p++;
    }
  }
  return out;
}

inline void write_png(const std::string& path, const Raster& r) {
  if (r.bit_depth != 8 && r.bit_depth != 16) throw std::invalid_argument("png: unsupported bit depth");
  detail::PngScratch scratch;
  const std::size_t bps = r.bit_depth == 16 ? 2 : 1;
  const std::size_t rowbytes = r.width * static_cast<std::size_t>(r.channels) * bps;
  scratch.pixels.resize(rowbytes * r.height);
  unsigned char* p = scratch.pixels.data();
  for (std::uint16_t s : r.samples) {
    if (bps == 2) {
      *p++ = static_cast<unsigned char>(s >> 8);
      *p++ = static_cast<unsigned char>(s & 0xFF);
    } else {
      *p++ = static_cast<unsigned char>(s);
    }
  }
  scratch.rows.resize(r.height);
  for (std::size_t y = 0; y < r.height; ++y) scratch.rows[y] = scratch.pixels.data() + y * rowbytes;

  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw FormatError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &scratch, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  const int rc = (png && info) ? detail::png_encode(fp, png, info, &scratch, &r) : -1;
  png_destroy_write_struct(&png, info ? &info : nullptr);
  std::fclose(fp);
  if (rc != 0) throw FormatError(path + ": png: " + (scratch.message[0] ? scratch.message : "encode failed"));
}

// ---------------------------------------------------------------------------
// Binary PPM / PGM
// ---------------------------------------------------------------------------

inline Raster decode_pnm(std::span<const unsigned char> data) {
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < data.size() && std::isspace(data[pos])) ++pos;
      if (pos < data.size() && data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string t;
    while (pos < data.size() && !std::isspace(data[pos])) t.push_back(static_cast<char>(data[pos++]));
    if (t.empty()) throw FormatError("pnm: truncated header");
    return t;
  };
  auto number = [&]() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw FormatError("pnm: malformed header field '" + t + "'");
    return std::stoul(t);
  };
  const std::string magic = token();
  Raster r;
  if (magic == "P5")
    r.channels = 1;
  else if (magic == "P6")
    r.channels = 3;
  else
    throw FormatError("pnm: unsupported magic '" + magic + "' (expected P5 or P6)");
  r.width = number();
  r.height = number();
  const unsigned long maxval = number();
  if (r.width == 0 || r.height == 0) throw FormatError("pnm: zero dimensions");
  if (maxval != 255 && maxval != 65535)
    throw FormatError("pnm: unsupported bit depth (maxval " + std::to_string(maxval) + "; expected 255 or 65535)");
  r.bit_depth = maxval == 255 ? 8 : 16;
  if (pos >= data.size()) throw FormatError("pnm: truncated header");
  ++pos;
  const std::size_t bps = r.bit_depth == 16 ? 2 : 1;
  const std::size_t count = r.width * r.height * static_cast<std::size_t>(r.channels);
  if (data.size() - pos < count * bps) throw FormatError("pnm: truncated payload");
  r.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (bps == 2) {
      r.samples[i] = static_cast<std::uint16_t>((data[pos] << 8) | data[pos + 1]);
      pos += 2;
    } else {
      r.samples[i] = data[pos++];
    }
  }
  return r;
}

inline Bytes encode_pnm(const Raster& r) {
  std::ostringstream header;
  header << (r.channels == 1 ? "P5" : "P6") << '\n' << r.width << ' ' << r.height << '\n'
         << (r.bit_depth == 16 ? 65535 : 255) << '\n';
  const std::string h = header.str();
  Bytes out(h.begin(), h.end());
  for (std::uint16_t s : r.samples) {
    if (r.bit_depth == 16) out.push_back(static_cast<unsigned char>(s >> 8));
    out.push_back(static_cast<unsigned char>(s & 0xFF));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch by extension
// ---------------------------------------------------------------------------

inline std::string lower_extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

inline Raster read_raster(const std::string& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    try {
      return decode_pnm(read_file(path));
    } catch (const FormatError& e) {
      throw FormatError(path + ": " + e.what());
    }
  }
  throw FormatError(path + ": unsupported image extension '" + ext + "'");
}

inline void write_raster(const std::string& path, const Raster& r) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return write_png(path, r);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    if (ext == ".pgm" && r.channels != 1) throw std::invalid_argument(path + ": PGM requires a single-channel image");
    if (ext == ".ppm" && r.channels != 3) throw std::invalid_argument(path + ": PPM requires an RGB image");
    return write_file(path, encode_pnm(r));
  }
  throw FormatError(path + ": unsupported image extension '" + ext + "'");
}

inline ImageRGB read_image_rgb(const std::string& path) { return to_rgb(read_raster(path)); }
inline ImageGray read_image_gray(const std::string& path) { return to_gray(read_raster(path)); }

inline void write_image(const std::string& path, const ImageRGB& img, int bit_depth = 8) {
  write_raster(path, from_rgb(img, bit_depth));
}
inline void write_image(const std::string& path, const ImageGray& img, int bit_depth = 8) {
  write_raster(path, from_gray(img, bit_depth));
}
inline void write_mask(const std::string& path, const Mask& mask) { write_raster(path, from_mask(mask)); }

inline Mask read_mask(const std::string& path) {
  const Raster r = read_raster(path);
  Mask m(r.height, r.width, 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    bool on = false;
    for (int c = 0; c < r.channels; ++c) on = on || r.samples[i * static_cast<std::size_t>(r.channels) + static_cast<std::size_t>(c)] > 0;
    m[i] = on ? 1 : 0;
  }
  return m;
}

}  // namespace ppsdepth::io
