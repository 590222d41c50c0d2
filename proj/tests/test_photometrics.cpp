#include <array>
#include <cmath>

#include <gtest/gtest.h>

#include "ppsdepth/losses.hpp"
#include "ppsdepth/photometrics.hpp"
#include "ppsdepth/rng.hpp"
#include "ppsdepth/scene.hpp"

using namespace ppsdepth;

namespace {

CameraIntrinsics centered_camera(std::size_t size, double f) {
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  return {f, f, c, c, size, size};
}

SceneSpec tube_spec(AlbedoSpec::Mode mode = AlbedoSpec::Mode::constant, std::uint64_t seed = 0) {
  SceneSpec spec;
  spec.shape = TubeScene{10.0, Eigen::Vector2d(2.0, 1.0), 60.0};
  spec.albedo.mode = mode;
  spec.albedo.seed = seed;
  return spec;
}

using V3 = std::array<double, 3>;

V3 sub(const V3& a, const V3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const V3& a, const V3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

// Scalar restatement of the rendering equation with its own back-projection
// and finite-difference normals.
double oracle_render(const DepthMap& d, const CameraIntrinsics& k, const LightSpec& light, const RenderModel& m,
                     double rho, std::size_t u, std::size_t v) {
  auto point = [&](std::size_t uu, std::size_t vv) -> V3 {
    const double z = d(vv, uu);
    return {z * (static_cast<double>(uu) - k.cx) / k.fx, z * (static_cast<double>(vv) - k.cy) / k.fy, z};
  };
  auto diff = [&](bool along_u) -> V3 {
    const std::size_t n = along_u ? d.width() : d.height();
    const std::size_t i = along_u ? u : v;
    const std::size_t lo = i == 0 ? 0 : (i + 1 == n ? n - 2 : i - 1);
    const std::size_t hi = i == 0 ? 1 : (i + 1 == n ? n - 1 : i + 1);
    const double s = (i == 0 || i + 1 == n) ? 1.0 : 0.5;
    const V3 a = along_u ? point(hi, v) : point(u, hi);
    const V3 b = along_u ? point(lo, v) : point(u, lo);
    const V3 r = sub(a, b);
    return {s * r[0], s * r[1], s * r[2]};
  };
  const V3 du = diff(true), dv = diff(false);
  V3 n{du[1] * dv[2] - du[2] * dv[1], du[2] * dv[0] - du[0] * dv[2], du[0] * dv[1] - du[1] * dv[0]};
  const double nl = std::sqrt(dot(n, n));
  for (double& c : n) c /= nl;
  const V3 x = point(u, v);
  const V3 off = sub(x, {light.position.x(), light.position.y(), light.position.z()});
  const double dist2 = dot(off, off);
  const double dist = std::sqrt(dist2);
  const V3 l{off[0] / dist, off[1] / dist, off[2] / dist};
  const double axial = dot(l, {light.direction.x(), light.direction.y(), light.direction.z()});
  const double spread = m.spread_mu == 0.0 ? 1.0 : (axial > 0.0 ? std::pow(axial, m.spread_mu) : 0.0);
  const double cos_theta = std::max(0.0, dot(l, n));
  const double raw = std::pow(m.sigma0 / dist2 * spread * cos_theta * rho * m.gain, 1.0 / m.gamma);
  return std::clamp(raw, 0.0, 1.0);
}

}  // namespace

TEST(Luminance, Examples) {
  ImageRGB img(1, 3);
  img[0] = Vec3(1, 1, 1);
  img[1] = Vec3(0, 0, 0);
  img[2] = Vec3(0.5, 0.25, 0.0);
  const ImageGray g = luminance(img);
  EXPECT_NEAR(g[0], 1.0, 1e-15);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_NEAR(g[2], 0.29625, 1e-15);
}

TEST(SpecularMask, PaperThresholdExamples) {
  ImageGray g(1, 3);
  g[0] = 0.99;
  g[1] = 0.50;
  g[2] = 0.98;
  const Mask m = specular_mask(g);
  EXPECT_EQ(m[0], 0);
  EXPECT_EQ(m[1], 1);
  EXPECT_EQ(m[2], 0);
  EXPECT_EQ(kSpecularThreshold, 0.98);
  EXPECT_THROW(specular_mask(g, 0.0), std::invalid_argument);
  EXPECT_THROW(specular_mask(g, 1.5), std::invalid_argument);
  EXPECT_NO_THROW(specular_mask(g, 1.0));
}

TEST(SpecularMask, MonotoneInThreshold) {
  Rng rng(2);
  ImageGray g(20, 20);
  for (double& v : g) v = rng.uniform();
  Mask prev = specular_mask(g, 0.05);
  for (double t = 0.1; t <= 1.0; t += 0.05) {
    const Mask m = specular_mask(g, t);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_GE(m[i], prev[i]);
    prev = m;
  }
}

TEST(AlbedoProxy, Examples) {
  ImageRGB img(1, 3);
  img[0] = Vec3(0.3, 0.3, 0.3);
  img[1] = Vec3(0.5, 0.0, 0.0);
  img[2] = Vec3(0.2, 0.4, 0.4);
  const AlbedoMap p = albedo_proxy(img);
  EXPECT_NEAR((p[0] - Vec3(1, 1, 1)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((p[1] - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((p[2] - Vec3(0.5, 1, 1)).norm(), 0.0, 1e-12);
  const Hsv h = rgb_to_hsv(img[2]);
  EXPECT_NEAR(h.h, 180.0, 1e-12);
  EXPECT_NEAR(h.s, 0.5, 1e-12);
}

TEST(AlbedoProxy, BlackPixelIsWhite) {
  const AlbedoMap p = albedo_proxy(ImageRGB(1, 1, Vec3::Zero()));
  EXPECT_EQ(p[0], Vec3(1, 1, 1));
}

TEST(AlbedoProxy, HsvRoundTripProperty) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 c(rng.uniform(), rng.uniform(), rng.uniform());
    EXPECT_NEAR((hsv_to_rgb(rgb_to_hsv(c)) - c).norm(), 0.0, 1e-12);
    // Value forced to one divides the colour by its largest channel.
    const Vec3 p = albedo_proxy(ImageRGB(1, 1, c))[0];
    EXPECT_NEAR((p - c / c.maxCoeff()).norm(), 0.0, 1e-12);
  }
}

TEST(Render, FrontoParallelExamples) {
  const CameraIntrinsics k{1, 1, 1, 1, 3, 3};
  const DepthMap d(3, 3, 2.0);
  const AlbedoMap rho(3, 3, Vec3::Ones());
  RenderModel m;
  EXPECT_NEAR(render(d, k, LightSpec{}, rho, m).image(1, 1)[0], 0.25, 1e-15);
  m.gamma = 2.0;
  EXPECT_NEAR(render(d, k, LightSpec{}, rho, m).image(1, 1)[0], 0.5, 1e-15);
}

TEST(Render, TubeMatchesScalarOracle) {
  const std::size_t size = 48;
  const CameraIntrinsics k = centered_camera(size, 40.0);
  const SceneTruth truth = generate_scene(tube_spec(AlbedoSpec::Mode::procedural, 5), k);
  RenderModel m;
  m.sigma0 = 40.0;
  m.gamma = 2.2;
  m.gain = 1.3;
  m.spread_mu = 0.5;
  LightSpec light;
  light.position = Vec3(0.3, -0.2, 0.1);
  light.direction = Vec3(0.01, 0.02, 1.0).normalized();
  const RenderResult r = render(truth.depth, k, light, truth.albedo, m);
  double worst = 0.0;
  for (std::size_t v = 0; v < size; ++v)
    for (std::size_t u = 0; u < size; ++u)
      for (int c = 0; c < 3; ++c)
        worst = std::max(worst, std::abs(r.image(v, u)[c] -
                                         oracle_render(truth.depth, k, light, m, truth.albedo(v, u)[c], u, v)));
  EXPECT_LT(worst, 1e-9);
}

TEST(Render, ConstantAlbedoGammaOneIsAffineInPps) {
  const CameraIntrinsics k = centered_camera(64, 50.0);
  const SceneTruth truth = generate_scene(tube_spec(), k);
  RenderModel m;
  m.sigma0 = 50.0;
  const RenderResult r = render(truth.depth, k, LightSpec{}, truth.albedo, m);
  const PPSField f = pps_from_depth(truth.depth, k, LightSpec{});
  Mask unclamped(64, 64);
  for (std::size_t i = 0; i < unclamped.size(); ++i) unclamped[i] = !r.clamped[i] && f.valid[i];
  EXPECT_GT(1.0 - pearson(luminance(r.image), f.pps, unclamped), -1e-15);
  EXPECT_LT(1.0 - pearson(luminance(r.image), f.pps, unclamped), 1e-9);
}

TEST(Render, ClampedPixelsReported) {
  const CameraIntrinsics k{1, 1, 1, 1, 3, 3};
  RenderModel m;
  m.sigma0 = 100.0;
  const RenderResult r = render(DepthMap(3, 3, 2.0), k, LightSpec{}, AlbedoMap(3, 3, Vec3::Ones()), m);
  EXPECT_EQ(count_valid(r.clamped), 9u);
  EXPECT_EQ(r.image(1, 1), Vec3(1, 1, 1));
  m.gamma = 0.0;
  EXPECT_THROW(render(DepthMap(3, 3, 2.0), k, LightSpec{}, AlbedoMap(3, 3, Vec3::Ones()), m), std::invalid_argument);
}

TEST(InvertAlbedo, GammaOneRoundTrip) {
  const CameraIntrinsics k = centered_camera(64, 50.0);
  const SceneTruth truth = generate_scene(tube_spec(), k);
  const RenderModel m;  // sigma0 = gain = 1, as assumed by the inversion
  const RenderResult r = render(truth.depth, k, LightSpec{}, truth.albedo, m);
  const AlbedoEstimate est = invert_albedo(r.image, truth.depth, k, LightSpec{}, m);
  ASSERT_GT(count_valid(est.valid), 4000u);
  for (std::size_t i = 0; i < est.albedo.size(); ++i) {
    if (!est.valid[i]) continue;
    ASSERT_NEAR((est.albedo[i] - Vec3(0.8, 0.4, 0.4)).cwiseAbs().maxCoeff(), 0.0, 1e-9);
  }
  EXPECT_LT(albedo_variance_loss(est.albedo, est.valid), 1e-12);
}

TEST(InvertAlbedo, GammaTwoPointTwoProceduralRoundTrip) {
  const CameraIntrinsics k = centered_camera(64, 50.0);
  const SceneTruth truth = generate_scene(tube_spec(AlbedoSpec::Mode::procedural, 8), k);
  RenderModel m;
  m.gamma = 2.2;
  const RenderResult r = render(truth.depth, k, LightSpec{}, truth.albedo, m);
  const AlbedoEstimate est = invert_albedo(r.image, truth.depth, k, LightSpec{}, m);
  ASSERT_GT(count_valid(est.valid), 4000u);
  for (std::size_t i = 0; i < est.albedo.size(); ++i) {
    if (!est.valid[i]) continue;
    ASSERT_LT((est.albedo[i] - truth.albedo[i]).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(InvertAlbedo, ZeroIntensityAndGuards) {
  const CameraIntrinsics k{1, 1, 1, 1, 3, 3};
  ImageRGB img(3, 3, Vec3(0.1, 0.1, 0.1));
  img(1, 1) = Vec3::Zero();
  img(0, 0) = Vec3(1.0, 0.2, 0.2);
  const AlbedoEstimate est = invert_albedo(img, DepthMap(3, 3, 2.0), k, LightSpec{}, RenderModel{});
  EXPECT_EQ(est.valid(1, 1), 1);
  EXPECT_EQ(est.albedo(1, 1), Vec3::Zero());
  EXPECT_EQ(est.valid(0, 0), 0);

  // Light axis pointing away from the surface: R = 0 everywhere.
  RenderModel m;
  m.spread_mu = 1.0;
  LightSpec away;
  away.direction = Vec3(0, 0, -1);
  EXPECT_EQ(count_valid(invert_albedo(img, DepthMap(3, 3, 2.0), k, away, m).valid), 0u);
}

TEST(AlbedoVariance, Examples) {
  AlbedoMap a(1, 3, Vec3(0.5, 0.2, 0.1));
  EXPECT_EQ(albedo_variance_loss(a, Mask(1, 3, 1)), 0.0);
  a[0] = Vec3(0.0, 0.2, 0.1);
  a[1] = Vec3(1.0, 0.2, 0.1);
  Mask two(1, 3, 1);
  two[2] = 0;
  EXPECT_NEAR(albedo_variance_loss(a, two), 0.25 / 3.0, 1e-15);
  Mask one(1, 3, 0);
  one[2] = 1;
  EXPECT_THROW(albedo_variance_loss(a, one), DegenerateError);
  a[0] = a[2];
  one[0] = 1;
  EXPECT_EQ(albedo_variance_loss(a, one), 0.0);
}

TEST(AlbedoVariance, PermutationInvariant) {
  Rng rng(6);
  AlbedoMap a(1, 50);
  for (auto& c : a) c = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
  AlbedoMap b(1, 50);
  for (std::size_t i = 0; i < 50; ++i) b[i] = a[(i * 7) % 50];
  EXPECT_NEAR(albedo_variance_loss(a, Mask(1, 50, 1)), albedo_variance_loss(b, Mask(1, 50, 1)), 1e-15);
  EXPECT_GT(albedo_variance_loss(a, Mask(1, 50, 1)), 0.0);
}

TEST(Scene, PlaneConstantDepth) {
  SceneSpec spec;
  spec.shape = PlaneScene{2.0, 0.0, 0.0};
  const SceneTruth t = generate_scene(spec, centered_camera(16, 10.0));
  for (double d : t.depth) EXPECT_EQ(d, 2.0);
}

TEST(Scene, SphereCapCenterPixel) {
  SceneSpec spec;
  SphereCapScene s;
  s.center = Vec3(0, 0, 30);
  s.radius = 12.5;
  spec.shape = s;
  const SceneTruth t = generate_scene(spec, centered_camera(65, 200.0));
  EXPECT_NEAR(t.depth(32, 32), 30.0 - 12.5, 1e-12);
}

TEST(Scene, TubeMatchesBisectionOracle) {
  const std::size_t size = 64;
  const CameraIntrinsics k = centered_camera(size, 50.0);
  const TubeScene tube{10.0, Eigen::Vector2d(2.0, 1.0), 0.0};
  SceneSpec spec;
  spec.shape = tube;
  const DepthMap d = generate_scene(spec, k).depth;
  for (std::size_t v = 0; v < size; ++v)
    for (std::size_t u = 0; u < size; ++u) {
      const Vec3 ray = k.ray(static_cast<double>(u), static_cast<double>(v));
      // Inside the tube at t = 0, outside for large t: bisect the sign change.
      auto f = [&](double t) {
        const double x = t * ray.x() - tube.offset.x();
        const double y = t * ray.y() - tube.offset.y();
        return x * x + y * y - tube.radius * tube.radius;
      };
      double lo = 0.0, hi = 1.0;
      while (f(hi) < 0.0) hi *= 2.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
      }
      ASSERT_NEAR(d(v, u), 0.5 * (lo + hi), 1e-9) << "u=" << u << " v=" << v;
    }
}

TEST(Scene, UncoveredPixelsListed) {
  SceneSpec spec;
  spec.shape = SphereCapScene{};
  try {
    generate_scene(spec, centered_camera(32, 5.0));
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("(u=0, v=0)"), std::string::npos) << e.what();
  }
}

TEST(Scene, AnalyticNormalsOrientedAwayFromCamera) {
  const CameraIntrinsics k = centered_camera(32, 30.0);
  for (const SceneShape& shape : {SceneShape{PlaneScene{3.0, 0.2, -0.1}}, SceneShape{SphereCapScene{}},
                                  SceneShape{TubeScene{10.0, Eigen::Vector2d(1, 0), 40.0}},
                                  SceneShape{BumpFieldScene{}}}) {
    const DepthMap d = generate_scene({shape, {}}, k).depth;
    const PointMap x = backproject(d, k);
    const Grid<Vec3> n = analytic_normals(shape, d, k);
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_NEAR(n[i].norm(), 1.0, 1e-12);
      EXPECT_GE(n[i].dot(x[i]), 0.0);
    }
  }
}

TEST(Scene, BumpFieldOnSurface) {
  const BumpFieldScene bump{20.0, 1.5, 8.0, 0.3, 1.1};
  SceneSpec spec;
  spec.shape = bump;
  const CameraIntrinsics k = centered_camera(32, 30.0);
  const PointMap x = backproject(generate_scene(spec, k).depth, k);
  for (const Vec3& p : x) {
    const double h = bump.z0 + bump.amplitude * std::sin(2 * M_PI * p.x() / bump.wavelength + bump.phase_x) *
                                   std::sin(2 * M_PI * p.y() / bump.wavelength + bump.phase_y);
    EXPECT_NEAR(p.z(), h, 1e-9);
  }
}

TEST(Scene, ProceduralAlbedoDeterministicAndInRange) {
  AlbedoSpec a;
  a.mode = AlbedoSpec::Mode::procedural;
  a.seed = 99;
  const AlbedoMap m1 = make_albedo(a, 20, 30), m2 = make_albedo(a, 20, 30);
  EXPECT_TRUE(m1 == m2);
  double lo = 1.0, hi = 0.0;
  for (const Vec3& c : m1) {
    lo = std::min(lo, c.minCoeff());
    hi = std::max(hi, c.maxCoeff());
  }
  EXPECT_GE(lo, 0.0);
  EXPECT_LE(hi, 1.0);
  a.seed = 100;
  EXPECT_FALSE(make_albedo(a, 20, 30) == m1);
}
