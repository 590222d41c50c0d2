#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>
#include <vector>

#include "ppsdepth/errors.hpp"
#include "ppsdepth/grid.hpp"

namespace ppsdepth::io {

/// Fixed piecewise-linear map from t in [0,1]: blue, cyan, green, yellow, red.
/// For depth maps low values (near) are blue and high values (far) red.
inline Vec3 colormap(double t) {
  static const Vec3 stops[] = {{0, 0, 1}, {0, 1, 1}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}};
  if (!std::isfinite(t)) return Vec3::Zero();
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(static_cast<int>(t), 3);
  const double f = t - i;
  return (1.0 - f) * stops[i] + f * stops[i + 1];
}

/// Normalizes over the finite values of valid pixels; other pixels are black.
inline ImageRGB false_color(const ScalarMap& values, const Mask* valid = nullptr) {
  if (valid) require_same_shape(values, *valid, "false_color");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  auto usable = [&](std::size_t i) { return std::isfinite(values[i]) && (!valid || (*valid)[i]); };
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!usable(i)) continue;
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
  }
  ImageRGB img(values.height(), values.width(), Vec3::Zero());
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (usable(i)) img[i] = colormap((values[i] - lo) / span);
  return img;
}

/// CSV with header "iteration,loss"; iteration 0 is the initial iterate.
inline void write_loss_trace(const std::string& path, const std::vector<double>& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "iteration,loss\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << trace[i] << '\n';
  if (!out) throw FormatError("write to '" + path + "' failed");
}

}  // namespace ppsdepth::io
