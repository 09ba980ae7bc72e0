#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/geometry.hpp"
#include "geosweep/tensor.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

namespace pfm_detail {

struct Header {
  int width = 0, height = 0;
  int channels = 0;       // 1 for "Pf", 3 for "PF"
  bool byteswap = false;  // positive scale means big-endian payload
};

inline Header read_header(std::istream& in, const std::string& path) {
  std::string magic;
  double scale = 0.0;
  Header h;
  if (!(in >> magic >> h.width >> h.height >> scale))
    throw DataError("pfm: malformed header in " + path);
  if (magic == "Pf")
    h.channels = 1;
  else if (magic == "PF")
    h.channels = 3;
  else
    throw DataError("pfm: bad magic '" + magic + "' in " + path);
  if (h.width <= 0 || h.height <= 0)
    throw DataError("pfm: bad dimensions in " + path);
  if (scale == 0.0) throw DataError("pfm: zero scale in " + path);
  h.byteswap = scale > 0.0;
  in.get();  // single whitespace byte separating header from payload
  return h;
}

inline void write_header(std::ostream& out, int width, int height, int channels) {
  out << (channels == 1 ? "Pf" : "PF") << "\n"
      << width << " " << height << "\n"
      << "-1.0\n";
}

inline void swap_floats(std::vector<float>& v) {
  for (float& f : v) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    bits = __builtin_bswap32(bits);
    std::memcpy(&f, &bits, 4);
  }
}

inline std::vector<float> read_payload(std::istream& in, const Header& h,
                                       const std::string& path) {
  std::vector<float> data(static_cast<size_t>(h.width) * h.height * h.channels);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * 4));
  if (!in) throw DataError("pfm: truncated payload in " + path);
  if (h.byteswap) swap_floats(data);
  return data;
}

}  // namespace pfm_detail

/// Single-channel PFM, standard bottom-up row order.
inline void write_pfm(const std::string& path, const Array2D<float>& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("pfm: cannot open " + path + " for writing");
  pfm_detail::write_header(out, img.cols(), img.rows(), 1);
  for (int y = img.rows() - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(&img(y, 0)),
              static_cast<std::streamsize>(img.cols()) * 4);
  if (!out) throw DataError("pfm: write failed for " + path);
}

inline Array2D<float> read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("pfm: cannot open " + path);
  const auto h = pfm_detail::read_header(in, path);
  if (h.channels != 1) throw DataError("pfm: expected 1-channel file: " + path);
  const auto data = pfm_detail::read_payload(in, h, path);
  Array2D<float> img(h.height, h.width);
  for (int y = 0; y < h.height; ++y) {
    const float* row = data.data() + static_cast<size_t>(h.height - 1 - y) * h.width;
    std::memcpy(&img(y, 0), row, static_cast<size_t>(h.width) * 4);
  }
  return img;
}

/// 3-channel PFM (interleaved RGB), standard bottom-up row order.
inline void write_pfm_rgb(const std::string& path, const Array3D<float>& img) {
  if (img.dim2() != 3) throw ConfigError("pfm: rgb image must be (H, W, 3)");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("pfm: cannot open " + path + " for writing");
  pfm_detail::write_header(out, img.dim1(), img.dim0(), 3);
  for (int y = img.dim0() - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(&img(y, 0, 0)),
              static_cast<std::streamsize>(img.dim1()) * 3 * 4);
  if (!out) throw DataError("pfm: write failed for " + path);
}

inline Array3D<float> read_pfm_rgb(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("pfm: cannot open " + path);
  const auto h = pfm_detail::read_header(in, path);
  if (h.channels != 3) throw DataError("pfm: expected 3-channel file: " + path);
  const auto data = pfm_detail::read_payload(in, h, path);
  Array3D<float> img(h.height, h.width, 3);
  const size_t row_floats = static_cast<size_t>(h.width) * 3;
  for (int y = 0; y < h.height; ++y) {
    const float* row = data.data() + static_cast<size_t>(h.height - 1 - y) * row_floats;
    std::memcpy(&img(y, 0, 0), row, row_floats * 4);
  }
  return img;
}

/// Depth maps on disk use 0 for invalid pixels.
inline void save_depth_pfm(const std::string& path, const DepthMap& depth) {
  Array2D<float> img(depth.height(), depth.width(), 0.0f);
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (depth.is_valid(y, x)) img(y, x) = static_cast<float>(depth.values(y, x));
  write_pfm(path, img);
}

inline DepthMap load_depth_pfm(const std::string& path) {
  const auto img = read_pfm(path);
  DepthMap depth(img.rows(), img.cols());
  for (int y = 0; y < img.rows(); ++y)
    for (int x = 0; x < img.cols(); ++x) {
      const float d = img(y, x);
      if (d > 0.0f && std::isfinite(d))
        depth.set(y, x, d);
      else
        depth.invalidate(y, x);
    }
  return depth;
}

inline void save_image_pfm(const std::string& path, const Image& image) {
  write_pfm_rgb(path, image.rgb);
}

inline Image load_image_pfm(const std::string& path) {
  Image img;
  img.rgb = read_pfm_rgb(path);
  return img;
}

/// Camera text file: 3x4 world-to-camera extrinsic [R | t] in row-major
/// order, then the 3x3 intrinsic, all whitespace-separated. Image size is
/// not part of the file; the caller supplies it from the paired image.
inline CameraModel load_camera(const std::string& path, int width, int height) {
  std::ifstream in(path);
  if (!in) throw DataError("camera: cannot open " + path);
  double e[12], k[9];
  for (double& v : e)
    if (!(in >> v)) throw DataError("camera: truncated extrinsic in " + path);
  for (double& v : k)
    if (!(in >> v)) throw DataError("camera: truncated intrinsic in " + path);

  CameraModel cam;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = e[r * 4 + c];
    cam.translation(r) = e[r * 4 + 3];
  }
  if (k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0)
    throw DataError("camera: intrinsic is not [fx 0 cx; 0 fy cy; 0 0 1] in " + path);
  cam.fx = k[0];
  cam.cx = k[2];
  cam.fy = k[4];
  cam.cy = k[5];
  cam.width = width;
  cam.height = height;
  try {
    cam.validate();
  } catch (const ConfigError& err) {
    throw DataError("camera: " + path + ": " + err.what());
  }
  return cam;
}

inline void save_camera(const std::string& path, const CameraModel& cam) {
  std::ofstream out(path);
  if (!out) throw DataError("camera: cannot open " + path + " for writing");
  out.precision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << cam.rotation(r, c) << " ";
    out << cam.translation(r) << "\n";
  }
  out << "\n";
  out << cam.fx << " 0 " << cam.cx << "\n";
  out << "0 " << cam.fy << " " << cam.cy << "\n";
  out << "0 0 1\n";
  if (!out) throw DataError("camera: write failed for " + path);
}

}  // namespace geosweep
