#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

namespace png_detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

inline void put_chunk(std::vector<uint8_t>& out, const char type[4],
                      const std::vector<uint8_t>& payload) {
  put_u32(out, static_cast<uint32_t>(payload.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_u32(out, crc);
}

}  // namespace png_detail

/// 8-bit RGB PNG, [0,1] floats rounded to bytes. Preview output only.
inline void write_png(const std::string& path, const Image& image) {
  const int height = image.height(), width = image.width();
  if (height <= 0 || width <= 0) throw ConfigError("png: empty image");

  std::vector<uint8_t> raw(static_cast<size_t>(height) * (1 + static_cast<size_t>(width) * 3));
  size_t pos = 0;
  for (int y = 0; y < height; ++y) {
    raw[pos++] = 0;  // filter: none
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        raw[pos++] = static_cast<uint8_t>(
            std::clamp(std::lround(image.at(y, x, c) * 255.0f), 0L, 255L));
  }

  uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(compressed_size);
  if (compress2(compressed.data(), &compressed_size, raw.data(),
                static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK)
    throw DataError("png: deflate failed for " + path);
  compressed.resize(compressed_size);

  std::vector<uint8_t> out;
  const uint8_t signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.insert(out.end(), signature, signature + 8);

  std::vector<uint8_t> ihdr;
  png_detail::put_u32(ihdr, static_cast<uint32_t>(width));
  png_detail::put_u32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // deflate
  ihdr.push_back(0);   // adaptive filtering
  ihdr.push_back(0);   // no interlace
  png_detail::put_chunk(out, "IHDR", ihdr);
  png_detail::put_chunk(out, "IDAT", compressed);
  png_detail::put_chunk(out, "IEND", {});

  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("png: cannot open " + path + " for writing");
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("png: write failed for " + path);
}

/// Grayscale visualization of a depth map, near = bright; invalid = black.
inline Image depth_preview(const DepthMap& depth) {
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (depth.is_valid(y, x)) {
        const double d = depth.values(y, x);
        if (!any) {
          lo = hi = d;
          any = true;
        } else {
          lo = std::min(lo, d);
          hi = std::max(hi, d);
        }
      }
  Image img(depth.height(), depth.width());
  const double range = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) {
      float v = 0.0f;
      if (depth.is_valid(y, x))
        v = static_cast<float>(1.0 - (depth.values(y, x) - lo) / range);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
  return img;
}

}  // namespace geosweep
