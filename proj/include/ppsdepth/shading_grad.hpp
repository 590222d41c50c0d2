#pragma once

#include <cmath>

#include "ppsdepth/geometry.hpp"

namespace ppsdepth {

/// Reverse-mode derivative of pps_from_depth: given dLoss/dPPS per pixel,
/// returns dLoss/dDepth. Follows the chain backproject -> normals (central /
/// one-sided differences) -> lighting -> clamped shading. Pixels clamped at
/// L.N <= 0, with invalid normals, or with zero attenuation pass no gradient.
inline ScalarMap pps_vjp(const DepthMap& depth, const CameraIntrinsics& camera, const LightSpec& light,
                         const ScalarMap& grad_pps) {
  require_same_shape(depth, grad_pps, "pps_vjp");
  light.validate();
  const PointMap points = backproject(depth, camera);
  const std::size_t h = depth.height();
  const std::size_t w = depth.width();
  if (h < 2 || w < 2) throw std::invalid_argument("pps_vjp: depth map must be at least 2x2");

  Grid<Vec3> grad_points(h, w, Vec3::Zero());
  for (std::size_t v = 0; v < h; ++v) {
    const auto sv = detail::stencil(v, h);
    for (std::size_t u = 0; u < w; ++u) {
      const double g = grad_pps(v, u);
      if (g == 0.0) continue;
      const auto su = detail::stencil(u, w);
      const Vec3 du = su.scale * (points(v, su.hi) - points(v, su.lo));
      const Vec3 dv = sv.scale * (points(sv.hi, u) - points(sv.lo, u));
      const Vec3 c = du.cross(dv);
      const double clen = c.norm();
      if (!(clen > 1e-12 * du.norm() * dv.norm() && clen > 0.0)) continue;
      const Vec3 n = c / clen;

      const Vec3 offset = points(v, u) - light.position;
      const double dist2 = offset.squaredNorm();
      const double dist = std::sqrt(dist2);
      const Vec3 l = offset / dist;
      const double shade = l.dot(n);
      if (shade <= 0.0) continue;

      // d(lnA)/d(offset)
      double atten = 1.0 / dist2;
      Vec3 dlog_atten = -2.0 * offset / dist2;
      if (light.mu != 0.0) {
        const double axial = offset.dot(light.direction);
        if (axial <= 0.0) continue;
        atten = std::pow(axial / dist, light.mu) / dist2;
        dlog_atten = light.mu * light.direction / axial - (light.mu + 2.0) * offset / dist2;
      }

      const double g_atten = g * shade;
      const double g_shade = g * atten;
      const Vec3 g_l = g_shade * n;
      const Vec3 g_n = g_shade * l;

      grad_points(v, u) += (g_l - g_l.dot(l) * l) / dist + g_atten * atten * dlog_atten;

      const Vec3 g_c = (g_n - g_n.dot(n) * n) / clen;
      const Vec3 g_du = dv.cross(g_c);
      const Vec3 g_dv = g_c.cross(du);
      grad_points(v, su.hi) += su.scale * g_du;
      grad_points(v, su.lo) -= su.scale * g_du;
      grad_points(sv.hi, u) += sv.scale * g_dv;
      grad_points(sv.lo, u) -= sv.scale * g_dv;
    }
  }

  ScalarMap grad_depth(h, w, 0.0);
  for (std::size_t v = 0; v < h; ++v)
    for (std::size_t u = 0; u < w; ++u)
      grad_depth(v, u) = grad_points(v, u).dot(camera.ray(static_cast<double>(u), static_cast<double>(v)));
  return grad_depth;
}

}  // namespace ppsdepth
