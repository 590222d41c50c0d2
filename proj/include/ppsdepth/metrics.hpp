#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ppsdepth/errors.hpp"
#include "ppsdepth/losses.hpp"

namespace ppsdepth {

enum class Alignment { none, ssi };

inline const char* to_string(Alignment a) { return a == Alignment::ssi ? "ssi" : "none"; }

struct MetricReport {
  double rmse = 0.0;
  double rmse_log = 0.0;
  double absrel = 0.0;
  double sqrel_x1000 = 0.0;
  double delta_1_1 = 0.0;
  std::size_t pixel_count = 0;
  /// Valid pixels with a non-positive prediction: left out of rmse_log and
  /// counted as failures for delta.
  std::size_t excluded_log = 0;
  Alignment align = Alignment::none;
  ScaleShift alignment{};
};

/// Ratio test used for delta < 1.1.
inline bool within_ratio(double pred, double gt, double threshold = 1.1) {
  if (!(pred > 0.0)) return false;
  return std::max(pred / gt, gt / pred) < threshold;
}

inline MetricReport depth_metrics(const ScalarMap& pred, const ScalarMap& gt, const Mask& mask,
                                  Alignment align = Alignment::none) {
  require_same_shape(pred, gt, "depth_metrics");
  require_same_shape(pred, mask, "depth_metrics");
  MetricReport rep;
  rep.align = align;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask[i] && !(gt[i] > 0.0)) {
      std::ostringstream msg;
      msg << "depth_metrics: ground truth at index " << i << " is " << gt[i] << "; must be positive on the mask";
      throw std::invalid_argument(msg.str());
    }
  }
  if (align == Alignment::ssi) rep.alignment = ssi_align(pred, gt, mask);

  double se = 0.0;
  double se_log = 0.0;
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  std::size_t within = 0;
  std::size_t n = 0;
  std::size_t n_log = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double p = rep.alignment.scale * pred[i] + rep.alignment.shift;
    const double g = gt[i];
    const double e = p - g;
    se += e * e;
    abs_rel += std::abs(e) / g;
    sq_rel += e * e / g;
    ++n;
    if (p > 0.0) {
      const double le = std::log(p) - std::log(g);
      se_log += le * le;
      ++n_log;
    } else {
      ++rep.excluded_log;
    }
    if (within_ratio(p, g)) ++within;
  }
  if (n == 0) throw DegenerateError("depth_metrics: mask has no valid pixels");
  const double dn = static_cast<double>(n);
  rep.pixel_count = n;
  rep.rmse = std::sqrt(se / dn);
  rep.rmse_log = n_log > 0 ? std::sqrt(se_log / static_cast<double>(n_log)) : 0.0;
  rep.absrel = abs_rel / dn;
  rep.sqrel_x1000 = 1000.0 * sq_rel / dn;
  rep.delta_1_1 = static_cast<double>(within) / dn;
  return rep;
}

/// One "key value" pair per line.
inline std::string to_text(const MetricReport& rep) {
  std::ostringstream out;
  out.precision(17);
  out << "align " << to_string(rep.align) << '\n'
      << "rmse " << rep.rmse << '\n'
      << "rmse_log " << rep.rmse_log << '\n'
      << "absrel " << rep.absrel << '\n'
      << "sqrel_x1000 " << rep.sqrel_x1000 << '\n'
      << "delta_1_1 " << rep.delta_1_1 << '\n'
      << "pixel_count " << rep.pixel_count << '\n'
      << "excluded_log " << rep.excluded_log << '\n';
  if (rep.align == Alignment::ssi) out << "scale " << rep.alignment.scale << '\n' << "shift " << rep.alignment.shift << '\n';
  return out.str();
}

}  // namespace ppsdepth
