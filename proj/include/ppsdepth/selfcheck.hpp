#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ppsdepth/geometry.hpp"
#include "ppsdepth/gradcheck.hpp"
#include "ppsdepth/io/pfm.hpp"
#include "ppsdepth/io/ply.hpp"
#include "ppsdepth/io/weights.hpp"
#include "ppsdepth/losses.hpp"
#include "ppsdepth/metrics.hpp"
#include "ppsdepth/photometrics.hpp"
#include "ppsdepth/ppsnet_toy.hpp"
#include "ppsdepth/scene.hpp"

namespace ppsdepth {

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline CameraIntrinsics selfcheck_camera(std::size_t size) {
  const double n = static_cast<double>(size);
  return {0.8 * n, 0.8 * n, (n - 1.0) / 2.0, (n - 1.0) / 2.0, size, size};
}

inline SceneTruth selfcheck_tube(std::size_t size) {
  SceneSpec spec;
  spec.shape = TubeScene{10.0, Eigen::Vector2d(2.0, 1.0), 60.0};
  return generate_scene(spec, selfcheck_camera(size));
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

inline CheckOutcome check_inverse_square() {
  const std::size_t size = 128;
  const SceneTruth truth = selfcheck_tube(size);
  const PointMap points = backproject(truth.depth, selfcheck_camera(size));
  const PplField ppl = compute_ppl(points, LightSpec::colocated());
  double worst = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    worst = std::max(worst, std::abs(ppl.attenuation[i] * points[i].squaredNorm() - 1.0));
  return {"inverse-square law (128x128 tube)", worst < 1e-9, "max |A*dist^2 - 1| = " + fmt(worst)};
}

inline CheckOutcome check_gradients() {
  double worst = 0.0;
  std::string worst_name;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& c : run_gradient_checks(seed)) {
      if (!(c.result.max_rel_error <= worst)) {
        worst = c.result.max_rel_error;
        worst_name = c.name + " (seed " + std::to_string(seed) + ")";
      }
    }
  }
  return {"gradients vs central differences (8x8)", worst < 1e-4,
          "max relative error " + fmt(worst) + " in " + worst_name};
}

inline CheckOutcome check_scale_gauge() {
  const std::size_t size = 32;
  const CameraIntrinsics camera = selfcheck_camera(size);
  const SceneTruth truth = selfcheck_tube(size);
  RenderModel model;
  model.sigma0 = 50.0;
  const RenderResult r = render(truth.depth, camera, LightSpec::colocated(), truth.albedo, model);
  const ImageGray gray = luminance(r.image);
  DepthMap init = truth.depth;
  for (std::size_t v = 0; v < size; ++v)
    for (std::size_t u = 0; u < size; ++u) init(v, u) *= 1.0 + 0.1 * std::sin(0.4 * static_cast<double>(u + 2 * v));
  auto loss = [&](const DepthMap& d) {
    const PPSField f = pps_from_depth(d, camera, LightSpec::colocated());
    return pps_corr_loss(gray, f.pps, mask_and(specular_mask(gray), f.valid));
  };
  const double base = loss(init);
  double worst = 0.0;
  for (double c : {0.5, 3.0, 10.0}) {
    DepthMap scaled = init;
    for (double& d : scaled) d *= c;
    worst = std::max(worst, std::abs(loss(scaled) - base));
  }
  return {"scale-gauge invariance of pps_corr", worst < 1e-9, "max |L(cD) - L(D)| = " + fmt(worst)};
}

inline CheckOutcome check_metrics() {
  const SceneTruth truth = selfcheck_tube(32);
  const Mask mask = full_mask(32, 32);
  ScalarMap p105 = truth.depth, p12 = truth.depth;
  for (double& d : p105) d *= 1.05;
  for (double& d : p12) d *= 1.2;
  const MetricReport a = depth_metrics(p105, truth.depth, mask);
  const MetricReport b = depth_metrics(p12, truth.depth, mask);
  const bool ok = std::abs(a.absrel - 0.05) <= 1e-9 && a.delta_1_1 == 1.0 && b.delta_1_1 == 0.0;
  return {"metric sanity", ok,
          "absrel(1.05 gt) = " + fmt(a.absrel) + ", delta(1.05 gt) = " + fmt(a.delta_1_1) +
              ", delta(1.2 gt) = " + fmt(b.delta_1_1)};
}

inline CheckOutcome check_ppsnet_identities() {
  Rng rng(7);
  auto random_matrix = [&](Eigen::Index r, Eigen::Index c) {
    FeatureMap m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2.0, 2.0);
    return m;
  };
  std::vector<std::string> failures;

  const FeatureMap q1 = random_matrix(1, 4), k1 = random_matrix(1, 4), v1 = random_matrix(1, 3);
  if ((cross_attention(q1, k1, v1) - v1).cwiseAbs().maxCoeff() > 1e-15) failures.push_back("single-token attention");

  const FeatureMap w = attention_weights(random_matrix(5, 4), random_matrix(7, 4));
  if ((w.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-9) failures.push_back("softmax row sums");

  ChannelGrid grid{ScalarMap(4, 4), ScalarMap(4, 4)};
  for (auto& g : grid)
    for (double& x : g) x = rng.uniform(-1.0, 1.0);
  if (film_modulate(grid, {Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2)}) != grid)
    failures.push_back("FiLM identity");

  const std::size_t size = 16;
  const CameraIntrinsics camera = selfcheck_camera(size);
  const SceneTruth truth = selfcheck_tube(size);
  RenderModel model;
  model.sigma0 = 50.0;
  const ImageRGB image = render(truth.depth, camera, LightSpec::colocated(), truth.albedo, model).image;
  ToyWeights weights = ToyWeights::seeded(42);
  weights.zero_refiner();
  const PpsNetTrace t = ppsnet_forward(image, truth.depth, camera, LightSpec::colocated(), weights);
  if (t.refined != truth.depth) failures.push_back("zero-refiner residual");

  std::string detail = failures.empty() ? "all identities hold" : "failed:";
  for (const auto& f : failures) detail += " " + f + ";";
  return {"ppsnet wiring identities", failures.empty(), detail};
}

inline CheckOutcome check_round_trips() {
  Rng rng(11);
  std::vector<std::string> failures;
  for (int rep = 0; rep < 5; ++rep) {
    ScalarMap grid(3 + rep, 5 + 2 * rep);
    for (double& x : grid) x = static_cast<float>(rng.uniform(-1e3, 1e3));
    if (io::decode_pfm(io::encode_pfm(grid)) != grid) failures.push_back("pfm");

    io::PointCloud cloud;
    for (int i = 0; i < 10 + rep; ++i) {
      cloud.positions.emplace_back(static_cast<float>(rng.uniform(-5, 5)), static_cast<float>(rng.uniform(-5, 5)),
                                   static_cast<float>(rng.uniform(0.1, 9)));
      cloud.colors.push_back({static_cast<unsigned char>(rng.next() & 0xFF), static_cast<unsigned char>(rng.next() & 0xFF),
                              static_cast<unsigned char>(rng.next() & 0xFF)});
    }
    if (io::decode_ply(io::encode_ply(cloud)) != cloud) failures.push_back("ply");

    const ToyWeights w = ToyWeights::seeded(static_cast<std::uint64_t>(rep));
    const io::Bytes bytes = io::encode_weights(w);
    if (io::decode_weights(bytes) != w || io::encode_weights(io::decode_weights(bytes)) != bytes)
      failures.push_back("weights");
  }
  std::string detail = failures.empty() ? "pfm, ply and weights containers round-trip" : "failed:";
  for (const auto& f : failures) detail += " " + f;
  return {"format round trips", failures.empty(), detail};
}

}  // namespace detail

/// The analytic invariant suite behind the `selfcheck` command.
inline std::vector<CheckOutcome> run_selfcheck() {
  const std::vector<std::pair<std::string, std::function<CheckOutcome()>>> checks{
      {"inverse-square law", detail::check_inverse_square},
      {"gradients", detail::check_gradients},
      {"scale-gauge invariance", detail::check_scale_gauge},
      {"metric sanity", detail::check_metrics},
      {"ppsnet wiring identities", detail::check_ppsnet_identities},
      {"format round trips", detail::check_round_trips},
  };
  std::vector<CheckOutcome> out;
  for (const auto& [name, check] : checks) {
    const auto start = std::chrono::steady_clock::now();
    CheckOutcome c;
    try {
      c = check();
    } catch (const std::exception& e) {
      c = {name, false, std::string("threw: ") + e.what()};
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace ppsdepth
