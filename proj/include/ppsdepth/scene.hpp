#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <variant>

#include "ppsdepth/geometry.hpp"
#include "ppsdepth/rng.hpp"

namespace ppsdepth {

/// Plane z = z0 + slope_x * x + slope_y * y.
struct PlaneScene {
  double z0 = 2.0;
  double slope_x = 0.0;
  double slope_y = 0.0;
};

/// Convex sphere seen from outside. An optional fronto-parallel backdrop
/// (backdrop_depth > 0) fills rays that miss the sphere.
struct SphereCapScene {
  Vec3 center{0.0, 0.0, 30.0};
  double radius = 20.0;
  double backdrop_depth = 0.0;
};

/// Cylinder parallel to the optical axis with the camera inside it, axis
/// passing through (offset.x, offset.y). cap_depth > 0 closes the far end
/// with the plane z = cap_depth.
struct TubeScene {
  double radius = 10.0;
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  double cap_depth = 0.0;
};

/// Height field z = z0 + amplitude * sin(2 pi x / wavelength + phase_x) * sin(2 pi y / wavelength + phase_y).
struct BumpFieldScene {
  double z0 = 20.0;
  double amplitude = 1.0;
  double wavelength = 10.0;
  double phase_x = 0.0;
  double phase_y = 0.0;
};

using SceneShape = std::variant<PlaneScene, SphereCapScene, TubeScene, BumpFieldScene>;

struct AlbedoSpec {
  enum class Mode { constant, procedural };
  Mode mode = Mode::constant;
  Vec3 base{0.8, 0.4, 0.4};
  /// Relative modulation depth of the procedural pattern.
  double amplitude = 0.2;
  /// Pattern cycles across the image.
  double frequency = 3.0;
  std::uint64_t seed = 0;
};

struct SceneSpec {
  SceneShape shape = TubeScene{};
  AlbedoSpec albedo{};
};

struct SceneTruth {
  DepthMap depth;
  AlbedoMap albedo;
};

namespace detail {

inline std::optional<double> intersect(const PlaneScene& s, const Vec3& ray) {
  const double denom = 1.0 - s.slope_x * ray.x() - s.slope_y * ray.y();
  if (!(denom > 0.0)) return std::nullopt;
  const double t = s.z0 / denom;
  return t > 0.0 ? std::optional<double>(t) : std::nullopt;
}

inline std::optional<double> intersect(const SphereCapScene& s, const Vec3& ray) {
  const double a = ray.squaredNorm();
  const double b = ray.dot(s.center);
  const double c = s.center.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - a * c;
  std::optional<double> hit;
  if (disc >= 0.0) {
    const double t = (b - std::sqrt(disc)) / a;
    if (t > 0.0) hit = t;
  }
  if (s.backdrop_depth > 0.0 && (!hit || *hit > s.backdrop_depth)) hit = s.backdrop_depth;
  return hit;
}

inline std::optional<double> intersect(const TubeScene& s, const Vec3& ray) {
  const double a = ray.x() * ray.x() + ray.y() * ray.y();
  const double b = ray.x() * s.offset.x() + ray.y() * s.offset.y();
  const double c = s.offset.squaredNorm() - s.radius * s.radius;
  std::optional<double> hit;
  if (a > 0.0) {
    const double disc = b * b - a * c;
    if (disc >= 0.0) {
      const double t = (b + std::sqrt(disc)) / a;
      if (t > 0.0) hit = t;
    }
  }
  if (s.cap_depth > 0.0 && (!hit || *hit > s.cap_depth)) hit = s.cap_depth;
  return hit;
}

inline double bump_height(const BumpFieldScene& s, double x, double y) {
  const double k = 2.0 * std::numbers::pi / s.wavelength;
  return s.z0 + s.amplitude * std::sin(k * x + s.phase_x) * std::sin(k * y + s.phase_y);
}

inline std::optional<double> intersect(const BumpFieldScene& s, const Vec3& ray) {
  // First root of t - f(t*a, t*b) on [z0 - |A|, z0 + |A|], bracketed by a
  // fine scan and closed by bisection.
  const double amp = std::abs(s.amplitude);
  auto g = [&](double t) { return t - bump_height(s, t * ray.x(), t * ray.y()); };
  double lo = s.z0 - amp;
  const double hi_end = s.z0 + amp;
  if (!(lo > 0.0)) return std::nullopt;
  if (amp == 0.0) return s.z0;
  constexpr int kScan = 512;
  const double step = (hi_end - lo) / kScan;
  if (g(lo) >= 0.0) return lo;
  for (int k = 1; k <= kScan; ++k) {
    double hi = lo + step;
    const double ghi = g(hi);
    if (ghi >= 0.0) {
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (g(mid) < 0.0)
          lo = mid;
        else
          hi = mid;
      }
      return 0.5 * (lo + hi);
    }
    lo = hi;
  }
  return std::nullopt;
}

inline Vec3 normal_at(const PlaneScene& s, const Vec3&) { return Vec3(-s.slope_x, -s.slope_y, 1.0).normalized(); }

inline Vec3 normal_at(const SphereCapScene& s, const Vec3& x) {
  if (s.backdrop_depth > 0.0 && std::abs(x.z() - s.backdrop_depth) < 1e-12 &&
      std::abs((x - s.center).norm() - s.radius) > 1e-9)
    return Vec3::UnitZ();
  return (s.center - x).normalized();
}

inline Vec3 normal_at(const TubeScene& s, const Vec3& x) {
  if (s.cap_depth > 0.0 && std::abs(x.z() - s.cap_depth) < 1e-12) return Vec3::UnitZ();
  return Vec3(x.x() - s.offset.x(), x.y() - s.offset.y(), 0.0).normalized();
}

inline Vec3 normal_at(const BumpFieldScene& s, const Vec3& x) {
  const double k = 2.0 * std::numbers::pi / s.wavelength;
  const double sx = std::sin(k * x.x() + s.phase_x), cx = std::cos(k * x.x() + s.phase_x);
  const double sy = std::sin(k * x.y() + s.phase_y), cy = std::cos(k * x.y() + s.phase_y);
  const double fx = s.amplitude * k * cx * sy;
  const double fy = s.amplitude * k * sx * cy;
  return Vec3(-fx, -fy, 1.0).normalized();
}

}  // namespace detail

/// Depth along the pixel ray to the first surface hit, or nullopt.
inline std::optional<double> scene_depth_at(const SceneShape& shape, const Vec3& ray) {
  return std::visit([&](const auto& s) { return detail::intersect(s, ray); }, shape);
}

/// Closed-form surface normal at a surface point, oriented away from the camera.
inline Vec3 analytic_normal(const SceneShape& shape, const Vec3& point) {
  return std::visit([&](const auto& s) { return detail::normal_at(s, point); }, shape);
}

inline AlbedoMap make_albedo(const AlbedoSpec& spec, std::size_t height, std::size_t width) {
  AlbedoMap albedo(height, width, spec.base);
  if (spec.mode == AlbedoSpec::Mode::constant) return albedo;
  Rng rng(spec.seed);
  const double phase_u = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase_v = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double tilt = rng.uniform(-0.5, 0.5);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t v = 0; v < height; ++v) {
    for (std::size_t u = 0; u < width; ++u) {
      const double su = static_cast<double>(u) / static_cast<double>(width);
      const double sv = static_cast<double>(v) / static_cast<double>(height);
      const double pattern = 0.5 * std::sin(two_pi * spec.frequency * (su + tilt * sv) + phase_u) +
                             0.5 * std::sin(two_pi * spec.frequency * sv + phase_v);
      const Vec3 rho = spec.base * (1.0 + spec.amplitude * pattern);
      albedo(v, u) = rho.cwiseMax(0.0).cwiseMin(1.0);
    }
  }
  return albedo;
}

/// Ground-truth depth by exact ray-surface intersection, plus albedo.
inline SceneTruth generate_scene(const SceneSpec& spec, const CameraIntrinsics& camera) {
  camera.validate();
  DepthMap depth(camera.height, camera.width, 0.0);
  std::size_t missing = 0;
  std::ostringstream listing;
  for (std::size_t v = 0; v < camera.height; ++v) {
    for (std::size_t u = 0; u < camera.width; ++u) {
      const auto t = scene_depth_at(spec.shape, camera.ray(static_cast<double>(u), static_cast<double>(v)));
      if (t && std::isfinite(*t) && *t > 0.0) {
        depth(v, u) = *t;
      } else {
        if (missing < 16) listing << " (u=" << u << ", v=" << v << ")";
        ++missing;
      }
    }
  }
  if (missing > 0) {
    std::ostringstream msg;
    msg << "generate_scene: surface does not cover " << missing << " pixel(s):" << listing.str()
        << (missing > 16 ? " ..." : "");
    throw std::invalid_argument(msg.str());
  }
  return {std::move(depth), make_albedo(spec.albedo, camera.height, camera.width)};
}

inline Grid<Vec3> analytic_normals(const SceneShape& shape, const DepthMap& depth, const CameraIntrinsics& camera) {
  const PointMap points = backproject(depth, camera);
  Grid<Vec3> out(depth.height(), depth.width());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = analytic_normal(shape, points[i]);
  return out;
}

}  // namespace ppsdepth
