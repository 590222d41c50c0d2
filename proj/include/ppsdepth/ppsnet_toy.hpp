#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ppsdepth/geometry.hpp"
#include "ppsdepth/photometrics.hpp"
#include "ppsdepth/rng.hpp"

namespace ppsdepth {

/// T tokens x d features, one token per row.
using FeatureMap = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// Row-wise softmax(Q K^T / sqrt(d_k)) for a single head.
inline FeatureMap attention_weights(const FeatureMap& q, const FeatureMap& k) {
  if (q.cols() != k.cols()) throw std::invalid_argument("attention_weights: Q and K must share the key dimension");
  if (q.cols() == 0) throw std::invalid_argument("attention_weights: key dimension must be >= 1");
  if (k.rows() == 0) throw std::invalid_argument("attention_weights: K has no tokens");
  FeatureMap logits = (q * k.transpose()) / std::sqrt(static_cast<double>(k.cols()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - mx).exp();
    logits.row(r) /= logits.row(r).sum();
  }
  return logits;
}

/// Softmax(Q K^T / sqrt(d_k)) V. With heads > 1 the feature columns of Q, K
/// and V are split into equal contiguous slices, attended independently and
/// concatenated.
inline FeatureMap cross_attention(const FeatureMap& q, const FeatureMap& k, const FeatureMap& v, int heads = 1) {
  if (k.rows() != v.rows()) throw std::invalid_argument("cross_attention: K and V must have the same token count");
  if (q.cols() != k.cols()) throw std::invalid_argument("cross_attention: Q and K must share the key dimension");
  if (heads < 1 || q.cols() % heads != 0 || v.cols() % heads != 0)
    throw std::invalid_argument("cross_attention: head count must divide the feature dimensions");
  if (heads == 1) return attention_weights(q, k) * v;
  const Eigen::Index dk = q.cols() / heads;
  const Eigen::Index dv = v.cols() / heads;
  FeatureMap out(q.rows(), v.cols());
  for (int h = 0; h < heads; ++h) {
    const FeatureMap qh = q.middleCols(h * dk, dk);
    const FeatureMap kh = k.middleCols(h * dk, dk);
    out.middleCols(h * dv, dv) = attention_weights(qh, kh) * v.middleCols(h * dv, dv);
  }
  return out;
}

// ---------------------------------------------------------------------------
// FiLM
// ---------------------------------------------------------------------------

struct FiLMParams {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
};

using ChannelGrid = std::vector<ScalarMap>;

/// D_mod = gamma_c * D_c + beta_c for every channel c.
inline ChannelGrid film_modulate(const ChannelGrid& grid, const FiLMParams& params) {
  if (params.gamma.size() != params.beta.size() || static_cast<std::size_t>(params.gamma.size()) != grid.size())
    throw std::invalid_argument("film_modulate: gamma/beta length must equal the channel count");
  ChannelGrid out = grid;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const double g = params.gamma[static_cast<Eigen::Index>(c)];
    const double b = params.beta[static_cast<Eigen::Index>(c)];
    for (double& x : out[c]) x = g * x + b;
  }
  return out;
}

inline ScalarMap film_modulate(const ScalarMap& grid, const FiLMParams& params) {
  return film_modulate(ChannelGrid{grid}, params).front();
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t numel() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
  }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline constexpr std::size_t kPatchSize = 8;

/// Widths of the toy network.
struct ToyShape {
  std::size_t patch_dim = kPatchSize * kPatchSize * 3;
  std::size_t d_model = 16;
  std::size_t c1 = 4, c2 = 8, c3 = 16, c4 = 32;
};

/// Named tensors for the toy refinement network:
///   attn.wq / attn.wk / attn.wv   [patch_dim, d_model]
///   film.weight [2, d_model], film.bias [2]         (row 0 -> gamma, row 1 -> beta)
///   refiner.enc1 [c1,1,3,3]  refiner.enc2 [c2,c1,3,3]  refiner.enc3 [c3,c2,3,3]
///   refiner.bottleneck [c4,c3,3,3]
///   refiner.dec3 [c3,c4+c3,3,3]  refiner.dec2 [c2,c3+c2,3,3]  refiner.dec1 [c1,c2+c1,3,3]
///   refiner.head [1,c1,1,1]
struct ToyWeights {
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::invalid_argument("ToyWeights: missing tensor '" + name + "'");
    return it->second;
  }

  friend bool operator==(const ToyWeights&, const ToyWeights&) = default;

  using Shape = ToyShape;

  static std::vector<std::pair<std::string, std::vector<std::uint32_t>>> layout(const Shape& s) {
    auto u = [](std::size_t x) { return static_cast<std::uint32_t>(x); };
    return {
        {"attn.wq", {u(s.patch_dim), u(s.d_model)}},
        {"attn.wk", {u(s.patch_dim), u(s.d_model)}},
        {"attn.wv", {u(s.patch_dim), u(s.d_model)}},
        {"film.weight", {2, u(s.d_model)}},
        {"film.bias", {2}},
        {"refiner.enc1", {u(s.c1), 1, 3, 3}},
        {"refiner.enc2", {u(s.c2), u(s.c1), 3, 3}},
        {"refiner.enc3", {u(s.c3), u(s.c2), 3, 3}},
        {"refiner.bottleneck", {u(s.c4), u(s.c3), 3, 3}},
        {"refiner.dec3", {u(s.c3), u(s.c4 + s.c3), 3, 3}},
        {"refiner.dec2", {u(s.c2), u(s.c3 + s.c2), 3, 3}},
        {"refiner.dec1", {u(s.c1), u(s.c2 + s.c1), 3, 3}},
        {"refiner.head", {1, u(s.c1), 1, 1}},
    };
  }

  static ToyWeights zeros(const Shape& shape = {}) {
    ToyWeights w;
    for (auto& [name, dims] : layout(shape)) {
      Tensor t{dims, {}};
      t.values.assign(t.numel(), 0.0f);
      w.tensors.emplace(name, std::move(t));
    }
    return w;
  }

  /// Uniform in +-1/sqrt(fan_in) from a fixed seed; FiLM starts at gamma=1, beta=0
  /// plus a small seeded perturbation.
  static ToyWeights seeded(std::uint64_t seed, const Shape& shape = {}) {
    ToyWeights w = zeros(shape);
    Rng rng(seed);
    for (auto& [name, t] : w.tensors) {
      std::size_t fan_in = t.dims.size() >= 2 ? t.numel() / t.dims[0] : t.numel();
      if (name.rfind("attn.", 0) == 0) fan_in = t.dims[0];
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
      for (float& x : t.values) x = static_cast<float>(rng.uniform(-bound, bound));
      if (name == "film.weight" || name == "film.bias")
        for (float& x : t.values) x *= 0.1f;
    }
    w.tensors.at("film.bias").values[0] += 1.0f;
    return w;
  }

  void zero_refiner() {
    for (auto& [name, t] : tensors)
      if (name.rfind("refiner.", 0) == 0) std::fill(t.values.begin(), t.values.end(), 0.0f);
  }
};

// ---------------------------------------------------------------------------
// Refiner (4-level encoder-decoder, no biases)
// ---------------------------------------------------------------------------

namespace detail {

/// Same-size convolution with zero padding; kernel is [out, in, k, k].
inline ChannelGrid conv2d(const ChannelGrid& in, const Tensor& kernel, bool relu) {
  if (kernel.dims.size() != 4 || kernel.dims[1] != in.size() || kernel.dims[2] != kernel.dims[3])
    throw std::invalid_argument("conv2d: kernel shape does not match input channels");
  const std::size_t cout = kernel.dims[0];
  const std::size_t cin = kernel.dims[1];
  const std::size_t ks = kernel.dims[2];
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(ks / 2);
  const std::size_t h = in.front().height();
  const std::size_t w = in.front().width();
  ChannelGrid out(cout, ScalarMap(h, w, 0.0));
  for (std::size_t o = 0; o < cout; ++o) {
    ScalarMap& dst = out[o];
    for (std::size_t c = 0; c < cin; ++c) {
      const ScalarMap& src = in[c];
      for (std::size_t ky = 0; ky < ks; ++ky) {
        for (std::size_t kx = 0; kx < ks; ++kx) {
          const double wgt = kernel.values[((o * cin + c) * ks + ky) * ks + kx];
          if (wgt == 0.0) continue;
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - half;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - half;
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t x = 0; x < w; ++x) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
              dst(y, x) += wgt * src(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
          }
        }
      }
    }
    if (relu)
      for (double& x : dst) x = std::max(0.0, x);
  }
  return out;
}

inline ChannelGrid avg_pool2(const ChannelGrid& in) {
  ChannelGrid out;
  for (const ScalarMap& c : in) {
    ScalarMap p(c.height() / 2, c.width() / 2);
    for (std::size_t y = 0; y < p.height(); ++y)
      for (std::size_t x = 0; x < p.width(); ++x)
        p(y, x) = 0.25 * (c(2 * y, 2 * x) + c(2 * y, 2 * x + 1) + c(2 * y + 1, 2 * x) + c(2 * y + 1, 2 * x + 1));
    out.push_back(std::move(p));
  }
  return out;
}

inline ChannelGrid upsample2(const ChannelGrid& in) {
  ChannelGrid out;
  for (const ScalarMap& c : in) {
    ScalarMap p(c.height() * 2, c.width() * 2);
    for (std::size_t y = 0; y < p.height(); ++y)
      for (std::size_t x = 0; x < p.width(); ++x) p(y, x) = c(y / 2, x / 2);
    out.push_back(std::move(p));
  }
  return out;
}

inline ChannelGrid concat(ChannelGrid a, const ChannelGrid& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace detail

/// Delta_D from the modulated depth. Input height and width must be multiples of 8.
inline ScalarMap toy_refiner_forward(const ScalarMap& d_mod, const ToyWeights& weights) {
  if (d_mod.empty() || d_mod.height() % 8 != 0 || d_mod.width() % 8 != 0) {
    std::ostringstream msg;
    msg << "toy_refiner_forward: " << d_mod.height() << "x" << d_mod.width()
        << " is not divisible by 8; pad to " << (d_mod.height() + 7) / 8 * 8 << "x" << (d_mod.width() + 7) / 8 * 8;
    throw std::invalid_argument(msg.str());
  }
  using namespace detail;
  const ChannelGrid e1 = conv2d({d_mod}, weights.at("refiner.enc1"), true);
  const ChannelGrid e2 = conv2d(avg_pool2(e1), weights.at("refiner.enc2"), true);
  const ChannelGrid e3 = conv2d(avg_pool2(e2), weights.at("refiner.enc3"), true);
  const ChannelGrid b = conv2d(avg_pool2(e3), weights.at("refiner.bottleneck"), true);
  const ChannelGrid d3 = conv2d(concat(upsample2(b), e3), weights.at("refiner.dec3"), true);
  const ChannelGrid d2 = conv2d(concat(upsample2(d3), e2), weights.at("refiner.dec2"), true);
  const ChannelGrid d1 = conv2d(concat(upsample2(d2), e1), weights.at("refiner.dec1"), true);
  return conv2d(d1, weights.at("refiner.head"), false).front();
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Image -> tokens. Stands in for a learned encoder.
using FeatureProvider = std::function<FeatureMap(const ImageRGB&)>;

/// One token per 8x8 patch (row-major patch order); each token is the patch
/// flattened as (row, col, channel).
inline FeatureMap patch_features(const ImageRGB& image) {
  if (image.height() % kPatchSize != 0 || image.width() % kPatchSize != 0)
    throw std::invalid_argument("patch_features: image size must be a multiple of 8");
  const std::size_t ph = image.height() / kPatchSize;
  const std::size_t pw = image.width() / kPatchSize;
  FeatureMap f(static_cast<Eigen::Index>(ph * pw), static_cast<Eigen::Index>(kPatchSize * kPatchSize * 3));
  for (std::size_t py = 0; py < ph; ++py)
    for (std::size_t px = 0; px < pw; ++px) {
      const auto row = static_cast<Eigen::Index>(py * pw + px);
      Eigen::Index col = 0;
      for (std::size_t y = 0; y < kPatchSize; ++y)
        for (std::size_t x = 0; x < kPatchSize; ++x)
          for (int c = 0; c < 3; ++c) f(row, col++) = image(py * kPatchSize + y, px * kPatchSize + x)[c];
    }
  return f;
}

inline Eigen::MatrixXd to_matrix(const Tensor& t) {
  if (t.dims.size() != 2) throw std::invalid_argument("to_matrix: tensor is not rank 2");
  Eigen::MatrixXd m(t.dims[0], t.dims[1]);
  for (std::uint32_t r = 0; r < t.dims[0]; ++r)
    for (std::uint32_t c = 0; c < t.dims[1]; ++c) m(r, c) = t.values[r * t.dims[1] + c];
  return m;
}

/// FiLM parameters from the token-averaged x_combo through one linear map.
inline FiLMParams film_from_features(const FeatureMap& x_combo, const ToyWeights& weights) {
  const Eigen::MatrixXd w = to_matrix(weights.at("film.weight"));
  const Tensor& bias = weights.at("film.bias");
  if (w.cols() != x_combo.cols()) throw std::invalid_argument("film_from_features: film.weight width != feature dimension");
  const Eigen::VectorXd pooled = x_combo.colwise().mean().transpose();
  const Eigen::VectorXd out = w * pooled;
  FiLMParams p{Eigen::VectorXd(1), Eigen::VectorXd(1)};
  p.gamma[0] = out[0] + bias.values.at(0);
  p.beta[0] = out[1] + bias.values.at(1);
  return p;
}

struct PpsNetTrace {
  /// albedo_proxy(I) * PPS(D_init), the image fed to the feature provider.
  ImageRGB pps_image;
  FeatureMap rgb_feats;
  FeatureMap pps_feats;
  FeatureMap x_combo;
  FiLMParams film;
  ScalarMap d_mod;
  ScalarMap delta;
  /// D_init + Delta_D; not clamped, may contain non-positive values.
  ScalarMap refined;
  std::size_t non_positive = 0;
};

inline PpsNetTrace ppsnet_forward(const ImageRGB& image, const DepthMap& d_init, const CameraIntrinsics& camera,
                                  const LightSpec& light, const ToyWeights& weights,
                                  const FeatureProvider& features = patch_features, int heads = 1) {
  require_same_shape(image, d_init, "ppsnet_forward");
  PpsNetTrace t;
  t.rgb_feats = features(image);

  const ScalarMap pps = pps_from_depth(d_init, camera, light).pps;
  const AlbedoMap proxy = albedo_proxy(image);
  t.pps_image = ImageRGB(image.height(), image.width());
  for (std::size_t i = 0; i < image.size(); ++i) t.pps_image[i] = proxy[i] * pps[i];
  t.pps_feats = features(t.pps_image);

  const FeatureMap q = t.rgb_feats * to_matrix(weights.at("attn.wq"));
  const FeatureMap k = t.pps_feats * to_matrix(weights.at("attn.wk"));
  const FeatureMap v = t.pps_feats * to_matrix(weights.at("attn.wv"));
  t.x_combo = cross_attention(q, k, v, heads);

  t.film = film_from_features(t.x_combo, weights);
  t.d_mod = film_modulate(d_init, t.film);
  t.delta = toy_refiner_forward(t.d_mod, weights);
  t.refined = d_init;
  for (std::size_t i = 0; i < t.refined.size(); ++i) {
    t.refined[i] += t.delta[i];
    if (!(t.refined[i] > 0.0)) ++t.non_positive;
  }
  return t;
}

}  // namespace ppsdepth
