#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ppsdepth/geometry.hpp"
#include "ppsdepth/losses.hpp"
#include "ppsdepth/refine.hpp"
#include "ppsdepth/rng.hpp"
#include "ppsdepth/shading_grad.hpp"

namespace ppsdepth {

/// Central differences with a step relative to each coordinate.
inline ScalarMap numeric_gradient(const std::function<double(const ScalarMap&)>& f, const ScalarMap& x,
                                  double rel_step = 1e-4) {
  ScalarMap g(x.height(), x.width(), 0.0);
  ScalarMap probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1e-3, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Per-entry |a - n| / max(|a|, |n|, floor) with floor = 1e-3 * max|n| + 1e-12,
/// so entries that are tiny relative to the whole gradient do not dominate.
inline GradCheck compare_gradients(const ScalarMap& analytic, const ScalarMap& numeric) {
  require_same_shape(analytic, numeric, "compare_gradients");
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = 1e-3 * scale + 1e-12;
  GradCheck out;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    if (err > out.max_rel_error || !std::isfinite(err)) {
      out.max_rel_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
      out.worst_index = i;
      out.analytic = a;
      out.numeric = n;
    }
  }
  return out;
}

/// Small seeded scene for derivative checks: a gently tilted, slightly rough
/// surface a few units from the camera, a random gray image and a full mask. Odd seeds
/// use an off-centre light with mu = 1 so the angular falloff path is covered.
struct GradScene {
  CameraIntrinsics camera;
  LightSpec light;
  DepthMap depth;
  ImageGray gray;
  ScalarMap target;
  Mask mask;
};

inline GradScene make_grad_scene(std::uint64_t seed, std::size_t size = 8) {
  Rng rng(seed);
  GradScene s;
  const double n = static_cast<double>(size);
  s.camera = {n, n, (n - 1.0) / 2.0, (n - 1.0) / 2.0, size, size};
  if (seed % 2 == 1) {
    s.light.position = Vec3(0.05, -0.04, 0.0);
    s.light.direction = Vec3(0.02, 0.01, 1.0).normalized();
    s.light.mu = 1.0;
  }
  s.depth = DepthMap(size, size);
  s.gray = ImageGray(size, size);
  s.target = ScalarMap(size, size);
  // Log-depth rises by at least 0.02 per pixel along both axes, so the
  // finite-difference probes never straddle a kink of the |d log D| terms.
  const double a = rng.uniform(0.03, 0.05);
  const double b = rng.uniform(0.03, 0.05);
  for (std::size_t v = 0; v < size; ++v)
    for (std::size_t u = 0; u < size; ++u) {
      s.depth(v, u) = 4.0 * std::exp(a * static_cast<double>(u) + b * static_cast<double>(v) + rng.uniform(-0.005, 0.005));
      s.gray(v, u) = rng.uniform(0.1, 0.9);
      s.target(v, u) = rng.uniform(0.01, 0.1);
    }
  s.mask = full_mask(size, size);
  return s;
}

struct NamedGradCheck {
  std::string name;
  GradCheck result;
};

/// Every analytic gradient in the library against central differences on
/// one seeded scene.
inline std::vector<NamedGradCheck> run_gradient_checks(std::uint64_t seed, double rel_step = 1e-4) {
  const GradScene s = make_grad_scene(seed);
  std::vector<NamedGradCheck> out;
  const ScalarMap pps = pps_from_depth(s.depth, s.camera, s.light).pps;

  out.push_back({"pps_sup wrt pps", compare_gradients(pps_sup_loss_grad(pps, s.target, s.mask),
                                                      numeric_gradient([&](const ScalarMap& p) {
                                                        return pps_sup_loss(p, s.target, s.mask);
                                                      }, pps, rel_step))});
  out.push_back({"pps_corr wrt pps", compare_gradients(pps_corr_loss_grad(s.gray, pps, s.mask),
                                                       numeric_gradient([&](const ScalarMap& p) {
                                                         return pps_corr_loss(s.gray, p, s.mask);
                                                       }, pps, rel_step))});
  out.push_back({"pps_sup wrt depth",
                 compare_gradients(pps_vjp(s.depth, s.camera, s.light, pps_sup_loss_grad(pps, s.target, s.mask)),
                                   numeric_gradient([&](const ScalarMap& d) {
                                     return pps_sup_loss(pps_from_depth(d, s.camera, s.light).pps, s.target, s.mask);
                                   }, s.depth, rel_step))});
  out.push_back({"pps_corr wrt depth",
                 compare_gradients(pps_vjp(s.depth, s.camera, s.light, pps_corr_loss_grad(s.gray, pps, s.mask)),
                                   numeric_gradient([&](const ScalarMap& d) {
                                     return pps_corr_loss(s.gray, pps_from_depth(d, s.camera, s.light).pps, s.mask);
                                   }, s.depth, rel_step))});

  // A well-spread prediction keeps the scale/shift fit well conditioned.
  ScalarMap pred(s.depth.height(), s.depth.width()), gt(s.depth.height(), s.depth.width());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    pred[i] = s.depth[i] + 10.0 * s.gray[i];
    gt[i] = 2.0 * pred[i] + 1.0 + 40.0 * s.target[i];
  }
  out.push_back({"ssi wrt pred", compare_gradients(ssi_loss_grad(pred, gt, s.mask),
                                                   numeric_gradient([&](const ScalarMap& p) {
                                                     return ssi_loss(p, gt, s.mask);
                                                   }, pred, rel_step))});
  out.push_back({"reg wrt depth", compare_gradients(smoothness_reg_grad(s.depth, s.gray),
                                                    numeric_gradient([&](const ScalarMap& d) {
                                                      return smoothness_reg(d, s.gray);
                                                    }, s.depth, rel_step))});

  DepthMap reference = s.depth;
  for (std::size_t i = 0; i < reference.size(); ++i) reference[i] *= 1.0 + 0.5 * s.target[i];
  const RefineObjective<> objective(s.gray, s.camera, s.light, s.mask, ObjectiveWeights{1.0, 0.1, 0.05}, reference);
  ScalarMap z(s.depth.height(), s.depth.width());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::log(s.depth[i]);
  auto exp_map = [](const ScalarMap& logd) {
    DepthMap d(logd.height(), logd.width());
    for (std::size_t i = 0; i < logd.size(); ++i) d[i] = std::exp(logd[i]);
    return d;
  };
  out.push_back({"refine objective wrt log-depth",
                 compare_gradients(objective.evaluate(s.depth).gradient,
                                   numeric_gradient([&](const ScalarMap& zz) {
                                     return objective.evaluate(exp_map(zz), false).value;
                                   }, z, rel_step))});
  return out;
}

}  // namespace ppsdepth
