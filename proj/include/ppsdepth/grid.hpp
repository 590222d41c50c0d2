#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace ppsdepth {

using Vec3 = Eigen::Vector3d;

/// Dense H×W field stored row-major. Index (row, col) == (v, u).
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t height, std::size_t width, const T& fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t v, std::size_t u) { return data_[v * width_ + u]; }
  const T& operator()(std::size_t v, std::size_t u) const { return data_[v * width_ + u]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

/// Depth in scene units along +z; strictly positive where valid.
using DepthMap = Grid<double>;
using ScalarMap = Grid<double>;
using PointMap = Grid<Vec3>;
/// RGB in [0,1] per channel.
using ImageRGB = Grid<Vec3>;
using ImageGray = Grid<double>;
using AlbedoMap = Grid<Vec3>;
/// 1 = valid, 0 = excluded.
using Mask = Grid<unsigned char>;

inline Mask full_mask(std::size_t height, std::size_t width) { return Mask(height, width, 1); }

inline std::size_t count_valid(const Mask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](unsigned char m) { return m != 0; }));
}

inline Mask mask_and(const Mask& a, const Mask& b) {
  Mask out(a.height(), a.width(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch (" << a.height() << "x" << a.width() << " vs " << b.height() << "x"
        << b.width() << ")";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace ppsdepth
