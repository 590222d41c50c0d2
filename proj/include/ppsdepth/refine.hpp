#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "ppsdepth/errors.hpp"
#include "ppsdepth/geometry.hpp"
#include "ppsdepth/losses.hpp"
#include "ppsdepth/photometrics.hpp"
#include "ppsdepth/shading_grad.hpp"

namespace ppsdepth {

struct ObjectiveWeights {
  double corr = 1.0;
  double smooth = 0.0;
  /// Optional L2 pull towards a reference depth (disabled when 0).
  double reference = 0.0;
};

struct ObjectiveValue {
  double value = 0.0;
  double corr_term = 0.0;
  double smooth_term = 0.0;
  double reference_term = 0.0;
  /// d value / d log(depth); empty when only the value was requested.
  ScalarMap gradient;
};

/// Self-supervised refinement objective over a depth map:
///   corr * (1 - Pearson(I_g, PPS(depth))) + smooth * L_reg(depth, I_g)
///   + reference * mean_M (depth - ref)^2
/// Gradients are taken with respect to log-depth.
template <typename Regularizer = EdgeAwareSmoothness>
class RefineObjective {
 public:
  RefineObjective(ImageGray gray, CameraIntrinsics camera, LightSpec light, Mask mask, ObjectiveWeights weights,
                  std::optional<DepthMap> reference = std::nullopt, Regularizer regularizer = {})
      : gray_(std::move(gray)),
        camera_(camera),
        light_(light),
        mask_(std::move(mask)),
        weights_(weights),
        reference_(std::move(reference)),
        regularizer_(std::move(regularizer)) {
    camera_.validate();
    light_.validate();
    require_same_shape(gray_, mask_, "RefineObjective");
    if (gray_.height() != camera_.height || gray_.width() != camera_.width)
      throw std::invalid_argument("RefineObjective: image does not match camera size");
    if (!(weights_.corr >= 0.0) || !(weights_.smooth >= 0.0) || !(weights_.reference >= 0.0))
      throw std::invalid_argument("RefineObjective: weights must be >= 0");
    if (weights_.reference > 0.0) {
      if (!reference_) throw std::invalid_argument("RefineObjective: reference weight set without a reference depth");
      require_same_shape(*reference_, gray_, "RefineObjective reference");
    }
  }

  const ImageGray& gray() const { return gray_; }
  const Mask& mask() const { return mask_; }

  ObjectiveValue evaluate(const DepthMap& depth, bool with_gradient = true) const {
    ObjectiveValue out;
    ScalarMap grad_depth;
    if (with_gradient) grad_depth = ScalarMap(depth.height(), depth.width(), 0.0);

    if (weights_.corr > 0.0) {
      const PPSField field = pps_from_depth(depth, camera_, light_);
      const Mask m = mask_and(mask_, field.valid);
      out.corr_term = pps_corr_loss(gray_, field.pps, m);
      out.value += weights_.corr * out.corr_term;
      if (with_gradient) {
        ScalarMap g = pps_corr_loss_grad(gray_, field.pps, m);
        for (double& x : g) x *= weights_.corr;
        const ScalarMap gd = pps_vjp(depth, camera_, light_, g);
        for (std::size_t i = 0; i < gd.size(); ++i) grad_depth[i] += gd[i];
      }
    } else {
      validate_depth(depth, camera_, "RefineObjective");
    }

    if (weights_.smooth > 0.0) {
      out.smooth_term = regularizer_.value(depth, gray_);
      out.value += weights_.smooth * out.smooth_term;
      if (with_gradient) {
        const ScalarMap gs = regularizer_.gradient(depth, gray_);
        for (std::size_t i = 0; i < gs.size(); ++i) grad_depth[i] += weights_.smooth * gs[i];
      }
    }

    if (weights_.reference > 0.0) {
      const std::size_t n = count_valid(mask_);
      if (n == 0) throw DegenerateError("RefineObjective: reference term has no valid pixels");
      double sum = 0.0;
      for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!mask_[i]) continue;
        const double r = depth[i] - (*reference_)[i];
        sum += r * r;
        if (with_gradient) grad_depth[i] += weights_.reference * 2.0 * r / static_cast<double>(n);
      }
      out.reference_term = sum / static_cast<double>(n);
      out.value += weights_.reference * out.reference_term;
    }

    if (with_gradient) {
      for (std::size_t i = 0; i < depth.size(); ++i) grad_depth[i] *= depth[i];
      out.gradient = std::move(grad_depth);
    }
    return out;
  }

 private:
  ImageGray gray_;
  CameraIntrinsics camera_;
  LightSpec light_;
  Mask mask_;
  ObjectiveWeights weights_;
  std::optional<DepthMap> reference_;
  Regularizer regularizer_;
};

/// Objective value and its gradient with respect to log-depth.
inline ObjectiveValue objective_and_gradient(const DepthMap& depth, const ImageRGB& image,
                                             const CameraIntrinsics& camera, const LightSpec& light, const Mask& mask,
                                             const ObjectiveWeights& weights) {
  return RefineObjective<>(luminance(image), camera, light, mask, weights).evaluate(depth);
}

struct RefineConfig {
  int max_iters = 500;
  /// Initial trial step in log-depth units.
  double step_size = 1.0;
  double weight_corr = 1.0;
  double weight_smooth = 0.1;
  /// Stop once the relative loss decrease of an accepted step falls below this.
  double stop_tol = 1e-12;
  /// Stop once max |gradient| falls below this.
  double grad_tol = 1e-12;
  int max_halvings = 20;
  /// Use a Barzilai-Borwein estimate as the first trial step after iteration 1.
  bool barzilai_borwein = true;
  /// Number of 2x coarsening levels in the pyramid preconditioner (0 = plain
  /// gradient). Level l adds (level_gain/4)^l times the block-summed gradient.
  int pyramid_levels = 6;
  double level_gain = 2.0;
  std::uint64_t seed = 0;
  std::optional<DepthMap> reference;
  double weight_reference = 0.0;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("RefineConfig: max_iters must be >= 1");
    if (!(step_size > 0.0)) throw std::invalid_argument("RefineConfig: step_size must be > 0");
    if (!(weight_corr >= 0.0) || !(weight_smooth >= 0.0) || !(weight_reference >= 0.0))
      throw std::invalid_argument("RefineConfig: weights must be >= 0");
    if (!(stop_tol >= 0.0) || !(grad_tol >= 0.0)) throw std::invalid_argument("RefineConfig: tolerances must be >= 0");
    if (max_halvings < 0) throw std::invalid_argument("RefineConfig: max_halvings must be >= 0");
    if (pyramid_levels < 0) throw std::invalid_argument("RefineConfig: pyramid_levels must be >= 0");
    if (!(level_gain > 0.0)) throw std::invalid_argument("RefineConfig: level_gain must be > 0");
  }
};

struct RefineResult {
  DepthMap refined;
  /// Loss of the initial iterate followed by every accepted iterate.
  std::vector<double> loss_trace;
  int iterations_used = 0;
  bool converged = false;
};

namespace detail {

inline double max_abs(const ScalarMap& g) {
  double m = 0.0;
  for (double x : g) m = std::max(m, std::abs(x));
  return m;
}

inline void require_finite_gradient(const ScalarMap& g, int iterate) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      std::ostringstream msg;
      msg << "refine_depth: non-finite gradient at iterate " << iterate << " (pixel index " << i << ")";
      throw std::runtime_error(msg.str());
    }
  }
}

/// Symmetric positive-definite multiscale preconditioner:
///   P g = g + sum_{l=1..levels} (gain/4)^l * E_l E_l^T g
/// where E_l^T sums 2^l x 2^l blocks and E_l replicates block values back.
/// Trailing partial blocks are handled as smaller blocks.
inline ScalarMap pyramid_precondition(const ScalarMap& g, int levels, double gain) {
  ScalarMap out = g;
  const std::size_t h = g.height();
  const std::size_t w = g.width();
  double weight = 1.0;
  for (int l = 1; l <= levels; ++l) {
    const std::size_t block = std::size_t{1} << l;
    if (block > std::max(h, w)) break;
    weight *= gain / 4.0;
    const std::size_t bh = (h + block - 1) / block;
    const std::size_t bw = (w + block - 1) / block;
    std::vector<double> sums(bh * bw, 0.0);
    for (std::size_t v = 0; v < h; ++v)
      for (std::size_t u = 0; u < w; ++u) sums[(v / block) * bw + u / block] += g(v, u);
    for (std::size_t v = 0; v < h; ++v)
      for (std::size_t u = 0; u < w; ++u) out(v, u) += weight * sums[(v / block) * bw + u / block];
  }
  return out;
}

}  // namespace detail

/// Gradient descent on log-depth with Armijo backtracking (halving). The
/// descent direction is the pyramid-preconditioned gradient, which moves
/// smooth depth modes the shading objective constrains only weakly. Only
/// strictly improving steps are accepted, so loss_trace is non-increasing.
template <typename Regularizer = EdgeAwareSmoothness>
RefineResult refine_depth(const DepthMap& init, const ImageRGB& image, const CameraIntrinsics& camera,
                          const LightSpec& light, const Mask& mask, const RefineConfig& config,
                          Regularizer regularizer = {}) {
  config.validate();
  validate_depth(init, camera, "refine_depth");
  require_same_shape(init, image, "refine_depth");
  require_same_shape(init, mask, "refine_depth");

  const RefineObjective<Regularizer> objective(
      luminance(image), camera, light, mask,
      ObjectiveWeights{config.weight_corr, config.weight_smooth, config.weight_reference}, config.reference,
      std::move(regularizer));

  const std::size_t n = init.size();
  ScalarMap z(init.height(), init.width());
  for (std::size_t i = 0; i < n; ++i) z[i] = std::log(init[i]);
  auto to_depth = [&](const ScalarMap& logd) {
    DepthMap d(logd.height(), logd.width());
    for (std::size_t i = 0; i < logd.size(); ++i) d[i] = std::exp(logd[i]);
    return d;
  };

  RefineResult result;
  DepthMap depth = init;
  ObjectiveValue current = objective.evaluate(depth);
  detail::require_finite_gradient(current.gradient, 0);
  result.loss_trace.push_back(current.value);

  if (detail::max_abs(current.gradient) <= config.grad_tol) {
    result.refined = std::move(depth);
    result.converged = true;
    return result;
  }

  ScalarMap prev_z;
  ScalarMap prev_g;
  double prev_alpha = 0.0;
  constexpr double kArmijo = 1e-4;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const ScalarMap& g = current.gradient;
    const ScalarMap dir = config.pyramid_levels > 0
                              ? detail::pyramid_precondition(g, config.pyramid_levels, config.level_gain)
                              : g;
    double alpha = config.step_size;
    if (config.barzilai_borwein && !prev_z.empty()) {
      // BB1 step in the preconditioner's metric: s^T P^-1 s / s^T y, where
      // the previous step s = -prev_alpha * P * prev_g gives P^-1 s directly.
      double s_pinv_s = 0.0;
      double sy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = z[i] - prev_z[i];
        s_pinv_s -= prev_alpha * s * prev_g[i];
        sy += s * (g[i] - prev_g[i]);
      }
      if (sy > 0.0 && s_pinv_s > 0.0 && std::isfinite(s_pinv_s / sy)) alpha = s_pinv_s / sy;
    }
    double gg = 0.0;
    for (std::size_t i = 0; i < n; ++i) gg += g[i] * dir[i];

    bool accepted = false;
    ScalarMap trial_z(z.height(), z.width());
    DepthMap trial_depth;
    double trial_value = std::numeric_limits<double>::infinity();
    for (int halving = 0; halving <= config.max_halvings; ++halving) {
      for (std::size_t i = 0; i < n; ++i) trial_z[i] = z[i] - alpha * dir[i];
      trial_depth = to_depth(trial_z);
      try {
        trial_value = objective.evaluate(trial_depth, false).value;
      } catch (const DegenerateError&) {
        trial_value = std::numeric_limits<double>::infinity();
      } catch (const std::invalid_argument&) {
        trial_value = std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(trial_value) && trial_value < current.value &&
          trial_value <= current.value - kArmijo * alpha * gg) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;

    ObjectiveValue next = objective.evaluate(trial_depth);
    detail::require_finite_gradient(next.gradient, iter);
    const double decrease = current.value - next.value;
    const double rel = decrease / std::max(std::abs(current.value), std::numeric_limits<double>::min());

    prev_alpha = alpha;
    prev_z = std::move(z);
    prev_g = std::move(current.gradient);
    z = std::move(trial_z);
    depth = std::move(trial_depth);
    current = std::move(next);
    result.loss_trace.push_back(current.value);
    result.iterations_used = iter;

    if (rel < config.stop_tol || detail::max_abs(current.gradient) <= config.grad_tol) {
      result.converged = true;
      break;
    }
  }
  result.refined = std::move(depth);
  return result;
}

}  // namespace ppsdepth
