#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "ppsdepth/geometry.hpp"
#include "ppsdepth/photometrics.hpp"
#include "ppsdepth/rng.hpp"
#include "ppsdepth/scene.hpp"

using namespace ppsdepth;

namespace {

CameraIntrinsics unit_camera(std::size_t w, std::size_t h) { return {1.0, 1.0, 0.0, 0.0, w, h}; }

CameraIntrinsics centered_camera(std::size_t size, double f) {
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  return {f, f, c, c, size, size};
}

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST(Backproject, PrincipalAxisPixel) {
  const PointMap x = backproject(DepthMap(1, 2, 2.0), unit_camera(2, 1));
  EXPECT_EQ(x(0, 0), Vec3(0, 0, 2));
}

TEST(Backproject, UnitFocalOffPixel) {
  const PointMap x = backproject(DepthMap(1, 2, 2.0), unit_camera(2, 1));
  EXPECT_EQ(x(0, 1), Vec3(2, 0, 2));
}

TEST(Backproject, MatchesExplicitInverseOracle) {
  const CameraIntrinsics k{300, 300, 160, 120, 320, 240};
  DepthMap d(240, 320, 1.0);
  d(150, 200) = 50.0;
  // Adjugate / determinant of [[fx,0,cx],[0,fy,cy],[0,0,1]], written out by hand.
  const double det = 300.0 * 300.0;
  const double inv[3][3] = {{300.0 / det, 0.0, -160.0 * 300.0 / det},
                            {0.0, 300.0 / det, -120.0 * 300.0 / det},
                            {0.0, 0.0, det / det}};
  const double p[3] = {200, 150, 1};
  Vec3 expected;
  for (int r = 0; r < 3; ++r) expected[r] = 50.0 * (inv[r][0] * p[0] + inv[r][1] * p[1] + inv[r][2] * p[2]);
  const Vec3 got = backproject(d, k)(150, 200);
  EXPECT_NEAR((got - expected).norm(), 0.0, 1e-12);
  EXPECT_EQ(got.z(), 50.0);
  EXPECT_NEAR((project(got, k) - Eigen::Vector2d(200, 150)).norm(), 0.0, 1e-9);
}

TEST(Backproject, ZEqualsDepth) {
  Rng rng(3);
  DepthMap d(7, 9);
  for (double& v : d) v = rng.uniform(0.1, 100.0);
  const PointMap x = backproject(d, CameraIntrinsics{7, 7, 4, 3, 9, 7});
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(x[i].z(), d[i]);
}

TEST(Backproject, RejectsBadInput) {
  EXPECT_THROW(backproject(DepthMap(2, 2, 1.0), unit_camera(3, 2)), std::invalid_argument);
  DepthMap d(2, 2, 1.0);
  d(1, 0) = 0.0;
  try {
    backproject(d, unit_camera(2, 2));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("u=0, v=1"), std::string::npos);
  }
  d(1, 0) = std::nan("");
  EXPECT_THROW(backproject(d, unit_camera(2, 2)), std::invalid_argument);
}

TEST(Project, Examples) {
  const CameraIntrinsics k = unit_camera(4, 4);
  EXPECT_EQ(project(Vec3(0, 0, 5), k), Eigen::Vector2d(0, 0));
  EXPECT_EQ(project(Vec3(2, 0, 2), k), Eigen::Vector2d(1, 0));
  EXPECT_THROW(project(Vec3(1, 1, 0), k), std::invalid_argument);
  EXPECT_THROW(project(Vec3(1, 1, -1), k), std::invalid_argument);
}

TEST(Project, RoundTripProperty) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const CameraIntrinsics k{rng.uniform(10, 500), rng.uniform(10, 500), rng.uniform(-5, 40), rng.uniform(-5, 30), 32, 24};
    DepthMap d(24, 32);
    for (double& v : d) v = rng.uniform(0.01, 1000.0);
    const PointMap x = backproject(d, k);
    for (std::size_t v = 0; v < 24; ++v)
      for (std::size_t u = 0; u < 32; ++u)
        EXPECT_NEAR((project(x(v, u), k) - Eigen::Vector2d(u, v)).norm(), 0.0, 1e-6);
  }
}

TEST(Normals, FrontoParallelIsExactlyUnitZ) {
  const NormalMap n = normals_from_depth(backproject(DepthMap(5, 6, 3.7), CameraIntrinsics{4, 4, 2.5, 2, 6, 5}));
  for (std::size_t i = 0; i < n.normals.size(); ++i) {
    EXPECT_EQ(n.normals[i], Vec3(0, 0, 1));
    EXPECT_EQ(n.valid[i], 1);
  }
}

TEST(Normals, SlantedPlaneMatchesSymbolicDerivative) {
  // Plane z = 2 + x seen by a unit-focal camera with cx = cy = 2:
  // X(u, v) = z(s) (s, t, 1) with s = u - 2, t = v - 2 and z(s) = 2 / (1 - s).
  const CameraIntrinsics k{1, 1, 2, 2, 3, 3};
  DepthMap d(3, 3);
  for (std::size_t v = 0; v < 3; ++v)
    for (std::size_t u = 0; u < 3; ++u) d(v, u) = 2.0 / (1.0 - (static_cast<double>(u) - 2.0));
  const NormalMap n = normals_from_depth(backproject(d, k));
  for (std::size_t v = 0; v < 3; ++v)
    for (std::size_t u = 0; u < 3; ++u) {
      const double s = static_cast<double>(u) - 2.0;
      const double t = static_cast<double>(v) - 2.0;
      const double z = 2.0 / (1.0 - s);
      const double dz = 2.0 / ((1.0 - s) * (1.0 - s));
      const Vec3 xu(z + s * dz, t * dz, dz);
      const Vec3 xv(0.0, z, 0.0);
      const Vec3 expected = xu.cross(xv).normalized();
      EXPECT_NEAR((n.normals(v, u) - expected).norm(), 0.0, 1e-12) << "u=" << u << " v=" << v;
      EXPECT_NEAR((n.normals(v, u) - Vec3(-1, 0, 1).normalized()).norm(), 0.0, 1e-12);
    }
}

TEST(Normals, SphereCapWithinOneDegree) {
  const std::size_t size = 128;
  const CameraIntrinsics k = centered_camera(size, 128.0);
  const SphereCapScene sphere;
  SceneSpec spec;
  spec.shape = sphere;
  const DepthMap d = generate_scene(spec, k).depth;
  const PointMap x = backproject(d, k);
  const NormalMap n = normals_from_depth(x);
  double worst = 0.0;
  for (std::size_t v = 1; v + 1 < size; ++v)
    for (std::size_t u = 1; u + 1 < size; ++u) {
      // Away-from-camera orientation for a convex cap: centre minus point.
      worst = std::max(worst, angle_deg(n.normals(v, u), sphere.center - x(v, u)));
    }
  EXPECT_LT(worst, 1.0);
}

TEST(Normals, UnitLengthProperty) {
  Rng rng(5);
  DepthMap d(16, 16);
  for (double& v : d) v = rng.uniform(5.0, 6.0);
  const NormalMap n = normals_from_depth(backproject(d, centered_camera(16, 16)));
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!n.valid[i]) continue;
    EXPECT_NEAR(n.normals[i].norm(), 1.0, 1e-6);
  }
}

TEST(Normals, DegenerateTangentsFlaggedInvalid) {
  // Every pixel back-projects to the same point: both tangents vanish.
  PointMap x(3, 3, Vec3(0, 0, 1));
  const NormalMap n = normals_from_depth(x);
  EXPECT_EQ(count_valid(n.valid), 0u);
  EXPECT_THROW(normals_from_depth(PointMap(1, 3, Vec3(0, 0, 1))), std::invalid_argument);
}

TEST(Ppl, Examples) {
  const LightSpec colocated;
  auto [l1, a1] = point_lighting(Vec3(0, 0, 2), colocated);
  EXPECT_EQ(l1, Vec3(0, 0, 1));
  EXPECT_EQ(a1, 0.25);
  EXPECT_EQ(point_lighting(Vec3(0, 0, 4), colocated).second, 0.0625);

  LightSpec spot;
  spot.mu = 2.0;
  auto [l3, a3] = point_lighting(Vec3(3, 0, 4), spot);
  EXPECT_NEAR((l3 - Vec3(0.6, 0, 0.8)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(a3, 0.8 * 0.8 / 25.0, 1e-15);
}

TEST(Ppl, BehindAxisClampsAndLightOnSurfaceThrows) {
  LightSpec spot;
  spot.mu = 1.0;
  EXPECT_EQ(point_lighting(Vec3(0, 0, -2), spot).second, 0.0);
  EXPECT_THROW(point_lighting(Vec3(0, 0, 1e-10), LightSpec{}), std::invalid_argument);
  LightSpec bad;
  bad.direction = Vec3(0, 0, 2);
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad.direction = Vec3(0, 0, 1);
  bad.mu = -1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Ppl, InverseSquareOnTube) {
  const CameraIntrinsics k = centered_camera(128, 100.0);
  SceneSpec spec;
  spec.shape = TubeScene{10.0, Eigen::Vector2d(2.0, 1.0), 60.0};
  const PointMap x = backproject(generate_scene(spec, k).depth, k);
  const PplField ppl = compute_ppl(x, LightSpec::colocated());
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(ppl.attenuation[i] * x[i].squaredNorm(), 1.0, 1e-9);
}

TEST(Pps, Examples) {
  Grid<Vec3> l(1, 2, Vec3(0, 0, 1));
  ScalarMap a(1, 2, 0.25);
  NormalMap n{Grid<Vec3>(1, 2, Vec3(0, 0, 1)), Mask(1, 2, 1)};
  n.normals(0, 1) = Vec3(0, 0, -1);
  const ScalarMap pps = compute_pps(l, a, n);
  EXPECT_EQ(pps(0, 0), 0.25);
  EXPECT_EQ(pps(0, 1), 0.0);
  EXPECT_THROW(compute_pps(l, ScalarMap(2, 1, 0.25), n), std::invalid_argument);
}

TEST(Pps, ConstantDepthCenterPixel) {
  const PPSField f = pps_from_depth(DepthMap(3, 3, 2.0), CameraIntrinsics{1, 1, 1, 1, 3, 3}, LightSpec{});
  EXPECT_EQ(f.pps(1, 1), 0.25);
}

TEST(Pps, SlantedPlaneMatchesBruteForceOracle) {
  const std::size_t size = 64;
  const CameraIntrinsics k = centered_camera(size, 60.0);
  const double z0 = 5.0, a = 0.3, b = -0.2;
  LightSpec light;
  light.position = Vec3(0.1, -0.05, 0.0);
  light.direction = Vec3(0.05, 0.02, 1.0).normalized();
  light.mu = 1.5;
  DepthMap d(size, size);
  for (std::size_t v = 0; v < size; ++v)
    for (std::size_t u = 0; u < size; ++u) {
      const double rx = (static_cast<double>(u) - k.cx) / k.fx;
      const double ry = (static_cast<double>(v) - k.cy) / k.fy;
      d(v, u) = z0 / (1.0 - a * rx - b * ry);
    }
  const PPSField f = pps_from_depth(d, k, light);
  double worst = 0.0;
  for (std::size_t v = 0; v < size; ++v)
    for (std::size_t u = 0; u < size; ++u) {
      const double z = d(v, u);
      const double x = z * (static_cast<double>(u) - k.cx) / k.fx;
      const double y = z * (static_cast<double>(v) - k.cy) / k.fy;
      const double ox = x - light.position.x(), oy = y - light.position.y(), oz = z - light.position.z();
      const double dist = std::sqrt(ox * ox + oy * oy + oz * oz);
      const double lx = ox / dist, ly = oy / dist, lz = oz / dist;
      const double axial = lx * light.direction.x() + ly * light.direction.y() + lz * light.direction.z();
      const double atten = std::pow(axial, light.mu) / (dist * dist);
      const double nn = std::sqrt(a * a + b * b + 1.0);
      const double ndotl = (-a * lx - b * ly + lz) / nn;
      worst = std::max(worst, std::abs(f.pps(v, u) - atten * std::max(0.0, ndotl)));
    }
  EXPECT_LT(worst, 1e-10);
}

TEST(Pps, ScaleCovarianceAtThree) {
  const CameraIntrinsics k = centered_camera(32, 30.0);
  Rng rng(9);
  DepthMap d(32, 32);
  for (std::size_t v = 0; v < 32; ++v)
    for (std::size_t u = 0; u < 32; ++u) d(v, u) = 4.0 + 0.3 * std::sin(0.3 * u) * std::cos(0.2 * v) + rng.uniform(0, 0.01);
  for (double c : {3.0, 0.5, 17.0}) {
    DepthMap dc = d;
    for (double& x : dc) x *= c;
    const ScalarMap p = pps_from_depth(d, k, LightSpec{}).pps;
    const ScalarMap pc = pps_from_depth(dc, k, LightSpec{}).pps;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] == 0.0) {
        EXPECT_EQ(pc[i], 0.0);
        continue;
      }
      EXPECT_NEAR(pc[i] * c * c / p[i], 1.0, 1e-6);
    }
  }
}

TEST(Pps, TubeMatchesRendererWithUnitAlbedo) {
  const CameraIntrinsics k = centered_camera(64, 50.0);
  SceneSpec spec;
  spec.shape = TubeScene{10.0, Eigen::Vector2d(2.0, 1.0), 60.0};
  const DepthMap d = generate_scene(spec, k).depth;
  const RenderResult r = render(d, k, LightSpec{}, AlbedoMap(64, 64, Vec3::Ones()), RenderModel{});
  const PPSField f = pps_from_depth(d, k, LightSpec{});
  for (std::size_t i = 0; i < d.size(); ++i) ASSERT_NEAR(r.image[i][0], f.pps[i], 1e-6);
}

TEST(Pps, InvalidNormalsGiveZero) {
  PointMap x(3, 3, Vec3(0, 0, 1));
  const PplField ppl = compute_ppl(x, LightSpec{});
  const ScalarMap pps = compute_pps(ppl.light_dirs, ppl.attenuation, normals_from_depth(x));
  for (double v : pps) EXPECT_EQ(v, 0.0);
}
