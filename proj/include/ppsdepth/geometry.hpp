#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <Eigen/Core>

#include "ppsdepth/grid.hpp"

namespace ppsdepth {

/// Pinhole intrinsics. Pixel (u, v) addresses the pixel centre with integer
/// coordinates in [0, width) x [0, height); no half-pixel offset is applied.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::size_t width = 1;
  std::size_t height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy))
      throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive and finite");
    if (!std::isfinite(cx) || !std::isfinite(cy))
      throw std::invalid_argument("CameraIntrinsics: principal point must be finite");
    if (width == 0 || height == 0) throw std::invalid_argument("CameraIntrinsics: image size must be non-zero");
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  /// K^-1 (u, v, 1)^T, a ray whose z-component is 1.
  Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
};

/// Point light: position p, axis d (unit), angular falloff exponent mu.
struct LightSpec {
  Vec3 position = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double mu = 0.0;

  static LightSpec colocated() { return {}; }

  void validate() const {
    if (!position.allFinite()) throw std::invalid_argument("LightSpec: position must be finite");
    if (std::abs(direction.norm() - 1.0) > 1e-9) throw std::invalid_argument("LightSpec: direction must be unit length");
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw std::invalid_argument("LightSpec: mu must be finite and >= 0");
  }
};

/// Surface points closer than this to the light are rejected.
inline constexpr double kLightSurfaceEpsilon = 1e-9;

inline void validate_depth(const DepthMap& depth, const CameraIntrinsics& camera, const char* what) {
  camera.validate();
  if (depth.height() != camera.height || depth.width() != camera.width) {
    std::ostringstream msg;
    msg << what << ": depth is " << depth.height() << "x" << depth.width() << " but camera expects " << camera.height
        << "x" << camera.width;
    throw std::invalid_argument(msg.str());
  }
  for (std::size_t v = 0; v < depth.height(); ++v) {
    for (std::size_t u = 0; u < depth.width(); ++u) {
      const double d = depth(v, u);
      if (!(d > 0.0) || !std::isfinite(d)) {
        std::ostringstream msg;
        msg << what << ": depth at (u=" << u << ", v=" << v << ") is " << d << "; must be positive and finite";
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

/// X(u,v) = D(u,v) K^-1 (u,v,1)^T.
inline PointMap backproject(const DepthMap& depth, const CameraIntrinsics& camera) {
  validate_depth(depth, camera, "backproject");
  PointMap points(depth.height(), depth.width());
  for (std::size_t v = 0; v < depth.height(); ++v)
    for (std::size_t u = 0; u < depth.width(); ++u)
      points(v, u) = depth(v, u) * camera.ray(static_cast<double>(u), static_cast<double>(v));
  return points;
}

inline Eigen::Vector2d project(const Vec3& point, const CameraIntrinsics& camera) {
  if (!(point.z() > 0.0)) throw std::invalid_argument("project: point is on or behind the camera plane (z <= 0)");
  return {camera.fx * point.x() / point.z() + camera.cx, camera.fy * point.y() / point.z() + camera.cy};
}

namespace detail {

/// Finite-difference stencil along one axis of length n: derivative at i is
/// scale * (f[hi] - f[lo]). Central in the interior, one-sided on the border.
struct Stencil {
  std::size_t lo;
  std::size_t hi;
  double scale;
};

inline Stencil stencil(std::size_t i, std::size_t n) {
  if (i == 0) return {0, 1, 1.0};
  if (i + 1 == n) return {n - 2, n - 1, 1.0};
  return {i - 1, i + 1, 0.5};
}

}  // namespace detail

/// Unit normals oriented away from the camera (fronto-parallel plane gives
/// (0,0,1)). Pixels whose tangents are parallel are flagged invalid and carry
/// a zero normal.
struct NormalMap {
  Grid<Vec3> normals;
  Mask valid;
};

inline NormalMap normals_from_depth(const PointMap& points) {
  const std::size_t h = points.height();
  const std::size_t w = points.width();
  if (h < 2 || w < 2) throw std::invalid_argument("normals_from_depth: point map must be at least 2x2");
  NormalMap out{Grid<Vec3>(h, w, Vec3::Zero()), Mask(h, w, 0)};
  for (std::size_t v = 0; v < h; ++v) {
    const auto sv = detail::stencil(v, h);
    for (std::size_t u = 0; u < w; ++u) {
      const auto su = detail::stencil(u, w);
      const Vec3 du = su.scale * (points(v, su.hi) - points(v, su.lo));
      const Vec3 dv = sv.scale * (points(sv.hi, u) - points(sv.lo, u));
      const Vec3 c = du.cross(dv);
      const double len = c.norm();
      if (len > 1e-12 * du.norm() * dv.norm() && len > 0.0 && std::isfinite(len)) {
        out.normals(v, u) = c / len;
        out.valid(v, u) = 1;
      }
    }
  }
  return out;
}

/// Per-pixel lighting: unit direction from light to surface and attenuation.
struct PplField {
  Grid<Vec3> light_dirs;
  ScalarMap attenuation;
};

/// Attenuation (L.d)^mu / |X-p|^2 for a single surface point.
inline std::pair<Vec3, double> point_lighting(const Vec3& point, const LightSpec& light) {
  const Vec3 offset = point - light.position;
  const double dist2 = offset.squaredNorm();
  const double dist = std::sqrt(dist2);
  if (!(dist >= kLightSurfaceEpsilon)) throw std::invalid_argument("compute_ppl: surface point coincides with the light");
  const Vec3 dir = offset / dist;
  if (light.mu == 0.0) return {dir, 1.0 / dist2};
  const double cos_axis = dir.dot(light.direction);
  if (cos_axis <= 0.0) return {dir, 0.0};
  return {dir, std::pow(cos_axis, light.mu) / dist2};
}

inline PplField compute_ppl(const PointMap& points, const LightSpec& light) {
  light.validate();
  PplField out{Grid<Vec3>(points.height(), points.width()), ScalarMap(points.height(), points.width())};
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto [dir, atten] = point_lighting(points[i], light);
    out.light_dirs[i] = dir;
    out.attenuation[i] = atten;
  }
  return out;
}

/// PPS = A * max(0, L.N); zero where the normal is invalid.
inline ScalarMap compute_pps(const Grid<Vec3>& light_dirs, const ScalarMap& attenuation, const NormalMap& normals) {
  require_same_shape(light_dirs, attenuation, "compute_pps");
  require_same_shape(light_dirs, normals.normals, "compute_pps");
  require_same_shape(light_dirs, normals.valid, "compute_pps");
  ScalarMap pps(light_dirs.height(), light_dirs.width(), 0.0);
  for (std::size_t i = 0; i < pps.size(); ++i) {
    if (!normals.valid[i]) continue;
    pps[i] = attenuation[i] * std::max(0.0, light_dirs[i].dot(normals.normals[i]));
  }
  return pps;
}

struct PPSField {
  Grid<Vec3> light_dirs;
  ScalarMap attenuation;
  ScalarMap pps;
  /// Pixels with a well-defined normal.
  Mask valid;
};

inline PPSField pps_from_depth(const DepthMap& depth, const CameraIntrinsics& camera, const LightSpec& light) {
  const PointMap points = backproject(depth, camera);
  NormalMap normals = normals_from_depth(points);
  PplField ppl = compute_ppl(points, light);
  ScalarMap pps = compute_pps(ppl.light_dirs, ppl.attenuation, normals);
  return {std::move(ppl.light_dirs), std::move(ppl.attenuation), std::move(pps), std::move(normals.valid)};
}

}  // namespace ppsdepth
