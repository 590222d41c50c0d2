#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppsdepth/errors.hpp"
#include "ppsdepth/grid.hpp"

namespace ppsdepth {

// ---------------------------------------------------------------------------
// Supervised shading loss
// ---------------------------------------------------------------------------

/// (1/(H*W)) * sum M * (pred - gt)^2. Normalised by the full image area,
/// not by the number of valid pixels.
inline double pps_sup_loss(const ScalarMap& pred, const ScalarMap& gt, const Mask& mask) {
  require_same_shape(pred, gt, "pps_sup_loss");
  require_same_shape(pred, mask, "pps_sup_loss");
  if (count_valid(mask) == 0) throw DegenerateError("pps_sup_loss: mask has no valid pixels");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double r = pred[i] - gt[i];
    sum += r * r;
  }
  return sum / static_cast<double>(pred.size());
}

/// d pps_sup_loss / d pred.
inline ScalarMap pps_sup_loss_grad(const ScalarMap& pred, const ScalarMap& gt, const Mask& mask) {
  require_same_shape(pred, gt, "pps_sup_loss_grad");
  require_same_shape(pred, mask, "pps_sup_loss_grad");
  ScalarMap g(pred.height(), pred.width(), 0.0);
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mask[i]) g[i] = scale * (pred[i] - gt[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Self-supervised correlation loss
// ---------------------------------------------------------------------------

/// Pearson statistics over the valid pixels of two maps.
struct PearsonStats {
  std::vector<std::size_t> index;
  double mean_x = 0.0;
  double mean_y = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;

  double r() const { return sxy / std::sqrt(sxx * syy); }
};

namespace detail {

inline bool negligible_spread(double ss, double mean, std::size_t n) {
  const double scale = 1e-12 * std::abs(mean);
  return !(ss > static_cast<double>(n) * scale * scale) || ss <= 1e-300;
}

}  // namespace detail

/// Throws DegenerateError when fewer than two pixels are valid or either
/// signal is constant over them.
inline PearsonStats pearson_stats(const ScalarMap& x, const ScalarMap& y, const Mask& mask) {
  require_same_shape(x, y, "pearson");
  require_same_shape(x, mask, "pearson");
  PearsonStats s;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i]) s.index.push_back(i);
  const std::size_t n = s.index.size();
  if (n < 2) throw DegenerateError("degenerate correlation: fewer than two valid pixels");
  for (std::size_t i : s.index) {
    s.mean_x += x[i];
    s.mean_y += y[i];
  }
  s.mean_x /= static_cast<double>(n);
  s.mean_y /= static_cast<double>(n);
  for (std::size_t i : s.index) {
    const double dx = x[i] - s.mean_x;
    const double dy = y[i] - s.mean_y;
    s.sxx += dx * dx;
    s.syy += dy * dy;
    s.sxy += dx * dy;
  }
  if (detail::negligible_spread(s.sxx, s.mean_x, n) || detail::negligible_spread(s.syy, s.mean_y, n))
    throw DegenerateError("degenerate correlation: a masked signal has zero variance");
  return s;
}

inline double pearson(const ScalarMap& x, const ScalarMap& y, const Mask& mask) {
  return pearson_stats(x, y, mask).r();
}

/// 1 - Pearson(I_g, PPS) computed over valid pixels only (masked pixels are
/// excluded rather than zeroed). Range [0, 2].
inline double pps_corr_loss(const ImageGray& gray, const ScalarMap& pps, const Mask& mask) {
  return 1.0 - pearson(gray, pps, mask);
}

/// d pps_corr_loss / d pps.
inline ScalarMap pps_corr_loss_grad(const ImageGray& gray, const ScalarMap& pps, const Mask& mask) {
  const PearsonStats s = pearson_stats(gray, pps, mask);
  const double denom = std::sqrt(s.sxx * s.syy);
  const double r = s.sxy / denom;
  ScalarMap g(pps.height(), pps.width(), 0.0);
  for (std::size_t i : s.index) {
    const double dx = gray[i] - s.mean_x;
    const double dy = pps[i] - s.mean_y;
    g[i] = -(dx / denom - r * dy / s.syy);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Scale-shift invariant loss
// ---------------------------------------------------------------------------

struct ScaleShift {
  double scale = 1.0;
  double shift = 0.0;
};

/// Least-squares (s, t) minimising sum_M (s*pred + t - gt)^2.
inline ScaleShift ssi_align(const ScalarMap& pred, const ScalarMap& gt, const Mask& mask) {
  require_same_shape(pred, gt, "ssi_align");
  require_same_shape(pred, mask, "ssi_align");
  std::size_t n = 0;
  double mp = 0.0;
  double mg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    ++n;
    mp += pred[i];
    mg += gt[i];
  }
  if (n < 2) throw DegenerateError("ssi_align: fewer than two valid pixels");
  mp /= static_cast<double>(n);
  mg /= static_cast<double>(n);
  double spp = 0.0;
  double spg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double dp = pred[i] - mp;
    spp += dp * dp;
    spg += dp * (gt[i] - mg);
  }
  if (detail::negligible_spread(spp, mp, n)) throw DegenerateError("ssi_align: singular normal equations (constant prediction)");
  const double s = spg / spp;
  return {s, mg - s * mp};
}

inline ScalarMap apply_scale_shift(const ScalarMap& pred, const ScaleShift& st) {
  ScalarMap out(pred.height(), pred.width());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = st.scale * pred[i] + st.shift;
  return out;
}

/// Mean over valid pixels of the squared residual after alignment.
inline double ssi_loss(const ScalarMap& pred, const ScalarMap& gt, const Mask& mask) {
  const ScaleShift st = ssi_align(pred, gt, mask);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double r = st.scale * pred[i] + st.shift - gt[i];
    sum += r * r;
    ++n;
  }
  return sum / static_cast<double>(n);
}

/// d ssi_loss / d pred. The alignment is optimal, so its own sensitivity
/// drops out and only the direct term remains.
inline ScalarMap ssi_loss_grad(const ScalarMap& pred, const ScalarMap& gt, const Mask& mask) {
  const ScaleShift st = ssi_align(pred, gt, mask);
  const double n = static_cast<double>(count_valid(mask));
  ScalarMap g(pred.height(), pred.width(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mask[i]) g[i] = 2.0 / n * st.scale * (st.scale * pred[i] + st.shift - gt[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Edge-aware smoothness
// ---------------------------------------------------------------------------

/// First-order edge-aware smoothness on log-depth:
///   (1/(H*W)) * sum_pixels |dz/du| exp(-|dI/du|) + |dz/dv| exp(-|dI/dv|)
/// with z = log(depth) and forward differences (zero past the last
/// column / row).
struct EdgeAwareSmoothness {
  double value(const DepthMap& depth, const ImageGray& gray) const {
    require_same_shape(depth, gray, "smoothness_reg");
    if (depth.empty()) throw std::invalid_argument("smoothness_reg: empty depth map");
    double sum = 0.0;
    visit(depth, gray, [&](std::size_t, std::size_t, double dz, double weight) { sum += std::abs(dz) * weight; });
    return sum / static_cast<double>(depth.size());
  }

  /// d value / d depth.
  ScalarMap gradient(const DepthMap& depth, const ImageGray& gray) const {
    require_same_shape(depth, gray, "smoothness_reg");
    ScalarMap g(depth.height(), depth.width(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(depth.size());
    visit(depth, gray, [&](std::size_t from, std::size_t to, double dz, double weight) {
      const double sgn = dz > 0.0 ? 1.0 : (dz < 0.0 ? -1.0 : 0.0);
      g[to] += inv_n * sgn * weight / depth[to];
      g[from] -= inv_n * sgn * weight / depth[from];
    });
    return g;
  }

 private:
  template <typename Fn>
  static void visit(const DepthMap& depth, const ImageGray& gray, Fn&& fn) {
    const std::size_t h = depth.height();
    const std::size_t w = depth.width();
    for (std::size_t v = 0; v < h; ++v) {
      for (std::size_t u = 0; u < w; ++u) {
        const std::size_t i = v * w + u;
        if (u + 1 < w) {
          const std::size_t j = i + 1;
          fn(i, j, std::log(depth[j]) - std::log(depth[i]), std::exp(-std::abs(gray[j] - gray[i])));
        }
        if (v + 1 < h) {
          const std::size_t j = i + w;
          fn(i, j, std::log(depth[j]) - std::log(depth[i]), std::exp(-std::abs(gray[j] - gray[i])));
        }
      }
    }
  }
};

inline double smoothness_reg(const DepthMap& depth, const ImageGray& gray) {
  return EdgeAwareSmoothness{}.value(depth, gray);
}

inline ScalarMap smoothness_reg_grad(const DepthMap& depth, const ImageGray& gray) {
  return EdgeAwareSmoothness{}.gradient(depth, gray);
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Defaults are the training weights reported for the method.
struct LossWeights {
  double alpha_ssi = 1.0;
  double alpha_reg = 0.1;
  double alpha_pps_sup = 1.0;
  double alpha_pps_corr = 1.0;
  /// Only used when a caller supplies an externally computed VNL term.
  double alpha_vnl = 10.0;

  void validate() const {
    for (double a : {alpha_ssi, alpha_reg, alpha_pps_sup, alpha_pps_corr, alpha_vnl})
      if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
  }
};

struct LossTerms {
  std::optional<double> ssi;
  std::optional<double> reg;
  std::optional<double> pps_sup;
  std::optional<double> pps_corr;
  std::optional<double> vnl;
};

inline double aggregate_loss(const LossTerms& terms, const LossWeights& weights) {
  weights.validate();
  double total = 0.0;
  auto add = [&](const std::optional<double>& term, double alpha, const char* name) {
    if (!term) return;
    if (!std::isfinite(*term)) {
      std::ostringstream msg;
      msg << "aggregate_loss: term '" << name << "' is not finite (" << *term << ")";
      throw std::invalid_argument(msg.str());
    }
    total += alpha * *term;
  };
  add(terms.ssi, weights.alpha_ssi, "ssi");
  add(terms.reg, weights.alpha_reg, "reg");
  add(terms.pps_sup, weights.alpha_pps_sup, "pps_sup");
  add(terms.pps_corr, weights.alpha_pps_corr, "pps_corr");
  add(terms.vnl, weights.alpha_vnl, "vnl");
  return total;
}

}  // namespace ppsdepth
