#pragma once

#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ppsdepth/geometry.hpp"
#include "ppsdepth/io/binary.hpp"

namespace ppsdepth::io {

using Rgb8 = std::array<unsigned char, 3>;

struct PointCloud {
  std::vector<Eigen::Vector3f> positions;
  std::vector<Rgb8> colors;  // empty, or one per vertex

  bool has_color() const { return !colors.empty(); }
  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

enum class PlyEncoding { ascii, binary_little_endian };

/// One vertex per pixel that is unmasked and has positive finite depth;
/// vertices are emitted in row-major pixel order.
inline PointCloud make_pointcloud(const DepthMap& depth, const CameraIntrinsics& camera, const Mask& mask,
                                  const std::optional<ImageRGB>& color = std::nullopt) {
  camera.validate();
  if (depth.height() != camera.height || depth.width() != camera.width)
    throw std::invalid_argument("pointcloud: depth size does not match camera");
  require_same_shape(depth, mask, "pointcloud: mask");
  if (color) require_same_shape(depth, *color, "pointcloud: color image");
  PointCloud cloud;
  for (std::size_t v = 0; v < depth.height(); ++v) {
    for (std::size_t u = 0; u < depth.width(); ++u) {
      const double d = depth(v, u);
      if (!mask(v, u) || !std::isfinite(d) || !(d > 0.0)) continue;
      const Vec3 x = d * camera.ray(static_cast<double>(u), static_cast<double>(v));
      cloud.positions.push_back(x.cast<float>());
      if (color) {
        Rgb8 c{};
        for (int k = 0; k < 3; ++k)
          c[k] = static_cast<unsigned char>(std::lround(std::clamp((*color)(v, u)[k], 0.0, 1.0) * 255.0));
        cloud.colors.push_back(c);
      }
    }
  }
  if (cloud.positions.empty()) throw std::invalid_argument("pointcloud: no valid pixels (mask empty or depth invalid)");
  return cloud;
}

inline Bytes encode_ply(const PointCloud& cloud, PlyEncoding enc = PlyEncoding::binary_little_endian) {
  if (cloud.has_color() && cloud.colors.size() != cloud.positions.size())
    throw std::invalid_argument("ply: color count does not match vertex count");
  std::ostringstream os;
  os << "ply\nformat " << (enc == PlyEncoding::ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
     << "element vertex " << cloud.positions.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_color()) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  os << "end_header\n";
  if (enc == PlyEncoding::ascii) {
    os << std::setprecision(std::numeric_limits<float>::max_digits10);
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
      const auto& p = cloud.positions[i];
      os << p.x() << ' ' << p.y() << ' ' << p.z();
      if (cloud.has_color())
        os << ' ' << int(cloud.colors[i][0]) << ' ' << int(cloud.colors[i][1]) << ' ' << int(cloud.colors[i][2]);
      os << '\n';
    }
  }
  const std::string text = os.str();
  Bytes out(text.begin(), text.end());
  if (enc == PlyEncoding::binary_little_endian) {
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
      for (int k = 0; k < 3; ++k) append_f32_le(out, cloud.positions[i][k]);
      if (cloud.has_color()) out.insert(out.end(), cloud.colors[i].begin(), cloud.colors[i].end());
    }
  }
  return out;
}

/// Reads the subset written by encode_ply: a single vertex element with
/// float x,y,z and optional uchar red,green,blue.
inline PointCloud decode_ply(std::span<const unsigned char> data) {
  std::size_t pos = 0;
  auto line = [&]() {
    std::string s;
    while (pos < data.size() && data[pos] != '\n') s.push_back(static_cast<char>(data[pos++]));
    if (pos >= data.size()) throw FormatError("ply: truncated header");
    ++pos;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  };
  if (line() != "ply") throw FormatError("ply: bad magic (expected 'ply')");
  const std::string fmt = line();
  PlyEncoding enc;
  if (fmt == "format ascii 1.0")
    enc = PlyEncoding::ascii;
  else if (fmt == "format binary_little_endian 1.0")
    enc = PlyEncoding::binary_little_endian;
  else
    throw FormatError("ply: unsupported format line '" + fmt + "'");
  std::size_t count = 0;
  bool have_count = false;
  std::vector<std::string> props;
  for (;;) {
    const std::string l = line();
    if (l == "end_header") break;
    std::istringstream is(l);
    std::string kw;
    is >> kw;
    if (kw == "comment" || kw == "obj_info") continue;
    if (kw == "element") {
      std::string name;
      is >> name >> count;
      if (name != "vertex" || have_count || !is) throw FormatError("ply: only a single vertex element is supported");
      have_count = true;
    } else if (kw == "property") {
      std::string type, name;
      is >> type >> name;
      props.push_back(type + " " + name);
    } else {
      throw FormatError("ply: unexpected header line '" + l + "'");
    }
  }
  const std::vector<std::string> xyz{"float x", "float y", "float z"};
  const std::vector<std::string> xyzrgb{"float x", "float y", "float z", "uchar red", "uchar green", "uchar blue"};
  if (!have_count) throw FormatError("ply: missing vertex element");
  if (props != xyz && props != xyzrgb) throw FormatError("ply: unsupported vertex properties");
  const bool color = props.size() == 6;
  PointCloud cloud;
  if (enc == PlyEncoding::binary_little_endian) {
    const std::size_t stride = 12 + (color ? 3 : 0);
    if ((data.size() - pos) / stride < count) throw FormatError("ply: truncated vertex data");
    ByteReader in(data.subspan(pos), "ply");
    cloud.positions.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Eigen::Vector3f p;
      for (int k = 0; k < 3; ++k) p[k] = in.f32_le();
      cloud.positions.push_back(p);
      if (color) {
        const unsigned char* c = in.take(3);
        cloud.colors.push_back({c[0], c[1], c[2]});
      }
    }
    if (in.remaining() != 0) throw FormatError("ply: trailing bytes after vertex data");
  } else {
    std::istringstream is(std::string(data.begin() + static_cast<std::ptrdiff_t>(pos), data.end()));
    for (std::size_t i = 0; i < count; ++i) {
      Eigen::Vector3f p;
      if (!(is >> p.x() >> p.y() >> p.z())) throw FormatError("ply: truncated vertex data");
      cloud.positions.push_back(p);
      if (color) {
        int r, g, b;
        if (!(is >> r >> g >> b)) throw FormatError("ply: truncated vertex data");
        if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) throw FormatError("ply: color out of range");
        cloud.colors.push_back({static_cast<unsigned char>(r), static_cast<unsigned char>(g), static_cast<unsigned char>(b)});
      }
    }
  }
  return cloud;
}

inline PointCloud read_ply(const std::string& path) {
  try {
    return decode_ply(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_ply(const std::string& path, const PointCloud& cloud,
                      PlyEncoding enc = PlyEncoding::binary_little_endian) {
  write_file(path, encode_ply(cloud, enc));
}

inline PointCloud export_pointcloud(const DepthMap& depth, const CameraIntrinsics& camera, const Mask& mask,
                                    const std::optional<ImageRGB>& color, const std::string& path,
                                    PlyEncoding enc = PlyEncoding::binary_little_endian) {
  PointCloud cloud = make_pointcloud(depth, camera, mask, color);
  write_ply(path, cloud, enc);
  return cloud;
}

}  // namespace ppsdepth::io
