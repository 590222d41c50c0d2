#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ppsdepth/errors.hpp"
#include "ppsdepth/geometry.hpp"

namespace ppsdepth {

inline constexpr double kSpecularThreshold = 0.98;

/// Rec.601 luma, clamped to [0,1].
inline ImageGray luminance(const ImageRGB& image) {
  ImageGray gray(image.height(), image.width());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const Vec3& c = image[i];
    gray[i] = std::clamp(0.299 * c.x() + 0.587 * c.y() + 0.114 * c.z(), 0.0, 1.0);
  }
  return gray;
}

/// M = 1 where I_g < threshold (strict).
inline Mask specular_mask(const ImageGray& gray, double threshold = kSpecularThreshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("specular_mask: threshold must lie in (0, 1]");
  Mask mask(gray.height(), gray.width(), 0);
  for (std::size_t i = 0; i < gray.size(); ++i) mask[i] = gray[i] < threshold ? 1 : 0;
  return mask;
}

// HSV with H in degrees [0,360), S and V in [0,1].
struct Hsv {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

inline Hsv rgb_to_hsv(const Vec3& rgb) {
  const double r = rgb.x(), g = rgb.y(), b = rgb.z();
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? delta / mx : 0.0;
  if (delta > 0.0) {
    double h;
    if (mx == r)
      h = std::fmod((g - b) / delta, 6.0);
    else if (mx == g)
      h = (b - r) / delta + 2.0;
    else
      h = (r - g) / delta + 4.0;
    h *= 60.0;
    if (h < 0.0) h += 360.0;
    out.h = h;
  }
  return out;
}

inline Vec3 hsv_to_rgb(const Hsv& hsv) {
  const double c = hsv.v * hsv.s;
  const double hp = hsv.h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Vec3 rgb;
  if (hp < 1.0)
    rgb = {c, x, 0.0};
  else if (hp < 2.0)
    rgb = {x, c, 0.0};
  else if (hp < 3.0)
    rgb = {0.0, c, x};
  else if (hp < 4.0)
    rgb = {0.0, x, c};
  else if (hp < 5.0)
    rgb = {x, 0.0, c};
  else
    rgb = {c, 0.0, x};
  const double m = hsv.v - c;
  return rgb.array() + m;
}

/// Reflectance proxy: keep hue and saturation, force value to 100%.
inline AlbedoMap albedo_proxy(const ImageRGB& image) {
  AlbedoMap out(image.height(), image.width());
  for (std::size_t i = 0; i < image.size(); ++i) {
    Hsv hsv = rgb_to_hsv(image[i]);
    hsv.v = 1.0;
    out[i] = hsv_to_rgb(hsv);
  }
  return out;
}

/// Per-pixel image formation
///   I = clamp((sigma0 / |X-p|^2 * R(psi) * cos(theta) * rho * gain)^(1/gamma), 0, 1)
/// with cos(theta) = max(0, L.N) and R(psi) = (L.d)^spread_mu.
struct RenderModel {
  double sigma0 = 1.0;
  double gain = 1.0;
  double gamma = 1.0;
  double spread_mu = 0.0;

  void validate() const {
    if (!(sigma0 > 0.0) || !(gain > 0.0) || !(gamma > 0.0))
      throw std::invalid_argument("RenderModel: sigma0, gain and gamma must be positive");
    if (!(spread_mu >= 0.0)) throw std::invalid_argument("RenderModel: spread_mu must be >= 0");
  }

  double spread(const Vec3& light_dir, const Vec3& axis) const {
    if (spread_mu == 0.0) return 1.0;
    const double c = light_dir.dot(axis);
    return c > 0.0 ? std::pow(c, spread_mu) : 0.0;
  }
};

struct RenderResult {
  ImageRGB image;
  /// Pixels where at least one channel hit the [0,1] clamp.
  Mask clamped;
  /// Pixels with a well-defined surface normal.
  Mask valid;
};

inline RenderResult render(const DepthMap& depth, const CameraIntrinsics& camera, const LightSpec& light,
                           const AlbedoMap& albedo, const RenderModel& model) {
  model.validate();
  light.validate();
  require_same_shape(depth, albedo, "render");
  const PointMap points = backproject(depth, camera);
  const NormalMap normals = normals_from_depth(points);
  RenderResult out{ImageRGB(depth.height(), depth.width(), Vec3::Zero()), Mask(depth.height(), depth.width(), 0),
                   normals.valid};
  const double inv_gamma = 1.0 / model.gamma;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!normals.valid[i]) continue;
    const Vec3 offset = points[i] - light.position;
    const double dist2 = offset.squaredNorm();
    if (!(std::sqrt(dist2) >= kLightSurfaceEpsilon)) throw std::invalid_argument("render: surface point coincides with the light");
    const Vec3 dir = offset / std::sqrt(dist2);
    const double cos_theta = std::max(0.0, dir.dot(normals.normals[i]));
    const double radiance = model.sigma0 / dist2 * model.spread(dir, light.direction) * cos_theta * model.gain;
    for (int c = 0; c < 3; ++c) {
      const double raw = std::pow(radiance * albedo[i][c], inv_gamma);
      if (raw > 1.0) out.clamped[i] = 1;
      out.image[i][c] = std::clamp(raw, 0.0, 1.0);
    }
  }
  return out;
}

struct AlbedoEstimate {
  AlbedoMap albedo;
  /// 0 where R*cos(theta) < 1e-6, the normal is undefined, or a channel is saturated.
  Mask valid;
};

/// rho = |X-p|^2 * I^gamma / (R(psi) cos(theta)) per channel, with sigma0 = gain = 1.
inline AlbedoEstimate invert_albedo(const ImageRGB& image, const DepthMap& depth, const CameraIntrinsics& camera,
                                    const LightSpec& light, const RenderModel& model) {
  model.validate();
  light.validate();
  require_same_shape(depth, image, "invert_albedo");
  const PointMap points = backproject(depth, camera);
  const NormalMap normals = normals_from_depth(points);
  AlbedoEstimate out{AlbedoMap(depth.height(), depth.width(), Vec3::Zero()), Mask(depth.height(), depth.width(), 0)};
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!normals.valid[i]) continue;
    const Vec3 offset = points[i] - light.position;
    const double dist2 = offset.squaredNorm();
    if (!(std::sqrt(dist2) >= kLightSurfaceEpsilon)) throw std::invalid_argument("invert_albedo: surface point coincides with the light");
    const Vec3 dir = offset / std::sqrt(dist2);
    const double denom = model.spread(dir, light.direction) * std::max(0.0, dir.dot(normals.normals[i]));
    if (denom < 1e-6) continue;
    const Vec3& px = image[i];
    if (px.maxCoeff() >= 1.0) continue;
    for (int c = 0; c < 3; ++c) out.albedo[i][c] = dist2 * std::pow(px[c], model.gamma) / denom;
    out.valid[i] = 1;
  }
  return out;
}

/// Mean of the three per-channel population variances over valid pixels.
inline double albedo_variance_loss(const AlbedoMap& albedo, const Mask& mask) {
  require_same_shape(albedo, mask, "albedo_variance_loss");
  const std::size_t n = count_valid(mask);
  if (n < 2) throw DegenerateError("albedo_variance_loss: fewer than two valid pixels");
  // Shifted by the first valid value so a constant map gives exactly zero.
  std::size_t first = 0;
  while (!mask[first]) ++first;
  const Vec3 ref = albedo[first];
  Vec3 mean = Vec3::Zero();
  for (std::size_t i = 0; i < albedo.size(); ++i)
    if (mask[i]) mean += albedo[i] - ref;
  mean /= static_cast<double>(n);
  Vec3 var = Vec3::Zero();
  for (std::size_t i = 0; i < albedo.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3 d = albedo[i] - ref - mean;
    var += d.cwiseProduct(d);
  }
  var /= static_cast<double>(n);
  return var.sum() / 3.0;
}

}  // namespace ppsdepth
