#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "hdrsr/error.hpp"
#include "hdrsr/image.hpp"

namespace hdrsr {

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path, const char* format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError(format, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline RasterImage decode_png(const std::vector<unsigned char>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DecodeError("PNG", image.message);
  }
  // The simplified API reports 16-bit sources as linear formats.
  if ((image.format & PNG_FORMAT_FLAG_LINEAR) != 0) {
    png_image_free(&image);
    throw DecodeError("PNG", "unsupported bit depth 16");
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DecodeError("PNG", msg);
  }
  RasterImage out(image.height, image.width, channels);
  auto dst = out.data();
  for (std::size_t i = 0; i < buffer.size(); ++i) dst[i] = buffer[i] / 255.0;
  return out;
}

inline RasterImage decode_ppm(const std::vector<unsigned char>& bytes) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long value = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > (1L << 24)) throw DecodeError("PPM", "header value too large");
      ++pos;
      any = true;
    }
    if (!any) throw DecodeError("PPM", "malformed header");
    return value;
  };
  const long width = next_token();
  const long height = next_token();
  const long maxval = next_token();
  if (maxval != 255) throw DecodeError("PPM", "unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DecodeError("PPM", "malformed header");
  ++pos;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  if (bytes.size() - pos < count) throw DecodeError("PPM", "truncated pixel data");
  RasterImage out(static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3);
  auto dst = out.data();
  for (std::size_t i = 0; i < count; ++i) dst[i] = bytes[pos + i] / 255.0;
  return out;
}

inline std::uint8_t quantize8(double v) {
  // round half up
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

}  // namespace detail

/// Reads an 8-bit PNG or a binary PPM (P6). Samples are code / 255.
inline RasterImage read_ldr_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path, "image");
  static constexpr std::array<unsigned char, 8> kPngSig = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig.begin(), kPngSig.end(), bytes.begin())) {
    return detail::decode_png(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return detail::decode_ppm(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P') {
    throw DecodeError("PPM", std::string("unsupported variant P") + static_cast<char>(bytes[1]));
  }
  throw DecodeError("image", "unrecognized format in " + path.string());
}

/// Writes an 8-bit PNG. Every sample must already be in [0,1].
inline void write_ldr_image(const RasterImage& image, const std::filesystem::path& path) {
  std::vector<unsigned char> buffer(image.size());
  const auto src = image.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!(src[i] >= 0.0 && src[i] <= 1.0)) {
      throw RangeError("write_ldr_image: sample " + std::to_string(src[i]) + " outside [0,1]");
    }
    buffer[i] = detail::quantize8(src[i]);
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw WriteError("cannot write PNG " + path.string() + ": " + msg);
  }
}

using Rgbe = std::array<std::uint8_t, 4>;

/// Shared-exponent encoding with rounded mantissas.
inline Rgbe encode_rgbe(double r, double g, double b) {
  const double v = std::max({r, g, b});
  if (!(v >= 1e-32)) return {0, 0, 0, 0};
  int e = 0;
  std::frexp(v, &e);  // v = m * 2^e, m in [0.5, 1)
  // A peak mantissa that rounds to 256 is clamped to 255 instead of moving to
  // the next exponent, which would double the step for the other channels.
  auto mantissa = [&](double c) { return std::min(std::lround(std::ldexp(c, 8 - e)), 255L); };
  if (e + 128 > 255) throw RangeError("RGBE exponent overflow");
  if (e + 128 <= 0) return {0, 0, 0, 0};
  return {static_cast<std::uint8_t>(mantissa(r)), static_cast<std::uint8_t>(mantissa(g)),
          static_cast<std::uint8_t>(mantissa(b)), static_cast<std::uint8_t>(e + 128)};
}

inline std::array<double, 3> decode_rgbe(const Rgbe& p) {
  if (p[3] == 0) return {0.0, 0.0, 0.0};
  const int e = static_cast<int>(p[3]) - 128 - 8;
  return {std::ldexp(static_cast<double>(p[0]), e), std::ldexp(static_cast<double>(p[1]), e),
          std::ldexp(static_cast<double>(p[2]), e)};
}

/// Writes an uncompressed Radiance RGBE file.
inline void write_hdr_image(const RasterImage& image, const std::filesystem::path& path) {
  if (image.channels() != 3) throw ShapeError("write_hdr_image needs a 3-channel image");
  const auto src = image.data();
  std::vector<unsigned char> pixels;
  pixels.reserve(image.height() * image.width() * 4);
  for (std::size_t i = 0; i < image.height() * image.width(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = src[3 * i + c];
      if (!std::isfinite(v) || v < 0.0) {
        throw RangeError("write_hdr_image: negative or non-finite sample " + std::to_string(v));
      }
    }
    const auto rgbe = encode_rgbe(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
    pixels.insert(pixels.end(), rgbe.begin(), rgbe.end());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WriteError("cannot open " + path.string() + " for writing");
  out << "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " << image.height() << " +X " << image.width() << "\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw WriteError("short write to " + path.string());
}

/// Reads a Radiance RGBE file (-Y H +X W orientation, flat or new-style RLE scanlines).
inline RasterImage read_hdr_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path, "Radiance");
  std::size_t pos = 0;
  auto read_line = [&]() {
    std::string line;
    while (pos < bytes.size() && bytes[pos] != '\n') line.push_back(static_cast<char>(bytes[pos++]));
    if (pos >= bytes.size()) throw DecodeError("Radiance", "truncated header");
    ++pos;
    return line;
  };
  const std::string magic = read_line();
  if (magic.rfind("#?", 0) != 0) throw DecodeError("Radiance", "missing #? signature");
  for (;;) {
    const std::string line = read_line();
    if (line.empty()) break;
    if (line.rfind("FORMAT=", 0) == 0 && line != "FORMAT=32-bit_rle_rgbe") {
      throw DecodeError("Radiance", "unsupported " + line);
    }
  }
  std::istringstream res(read_line());
  std::string ytag, xtag;
  long height = 0, width = 0;
  res >> ytag >> height >> xtag >> width;
  if (ytag != "-Y" || xtag != "+X" || height <= 0 || width <= 0) {
    throw DecodeError("Radiance", "unsupported resolution line");
  }
  RasterImage out(static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3);
  auto dst = out.data();
  std::vector<Rgbe> scan(static_cast<std::size_t>(width));
  auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw DecodeError("Radiance", "truncated pixel data");
  };
  for (long y = 0; y < height; ++y) {
    need(4);
    const bool rle = width >= 8 && width < 32768 && bytes[pos] == 2 && bytes[pos + 1] == 2 &&
                     ((bytes[pos + 2] << 8) | bytes[pos + 3]) == width;
    if (rle) {
      pos += 4;
      for (int c = 0; c < 4; ++c) {
        long x = 0;
        while (x < width) {
          need(1);
          int count = bytes[pos++];
          if (count > 128) {
            count -= 128;
            need(1);
            if (x + count > width) throw DecodeError("Radiance", "bad RLE run");
            const auto value = bytes[pos++];
            for (int k = 0; k < count; ++k) scan[static_cast<std::size_t>(x++)][c] = value;
          } else {
            if (count == 0 || x + count > width) throw DecodeError("Radiance", "bad RLE run");
            need(static_cast<std::size_t>(count));
            for (int k = 0; k < count; ++k) scan[static_cast<std::size_t>(x++)][c] = bytes[pos++];
          }
        }
      }
    } else {
      need(static_cast<std::size_t>(width) * 4);
      for (long x = 0; x < width; ++x) {
        for (int c = 0; c < 4; ++c) scan[static_cast<std::size_t>(x)][c] = bytes[pos++];
      }
    }
    for (long x = 0; x < width; ++x) {
      const auto rgb = decode_rgbe(scan[static_cast<std::size_t>(x)]);
      const auto base = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
      dst[base] = rgb[0];
      dst[base + 1] = rgb[1];
      dst[base + 2] = rgb[2];
    }
  }
  return out;
}

}  // namespace hdrsr
