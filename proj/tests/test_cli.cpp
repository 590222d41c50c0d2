#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "ppsdepth/io/image.hpp"
#include "ppsdepth/io/pfm.hpp"
#include "ppsdepth/io/ply.hpp"

using namespace ppsdepth;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("ppsdepth_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliRun run(const std::string& args) const {
    const std::string cmd = std::string("\"") + PPSDEPTH_CLI + "\" " + args + " >\"" + path("stdout.txt") +
                            "\" 2>\"" + path("stderr.txt") + "\"";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(path("stdout.txt"));
    r.err = slurp(path("stderr.txt"));
    return r;
  }

  std::string config() const { return std::string(PPSDEPTH_SOURCE_DIR) + "/configs/tube.yaml"; }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, EvalIdenticalFiles) {
  ScalarMap d(4, 5);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 1.0 + 0.25 * static_cast<double>(i);
  io::write_pfm(path("a.pfm"), d);
  io::write_pfm(path("b.pfm"), d);
  const CliRun r = run("eval " + path("a.pfm") + " " + path("b.pfm") + " --json " + path("m.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rmse 0\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("delta_1_1 1\n"), std::string::npos) << r.out;
  const auto j = nlohmann::json::parse(slurp(path("m.json")));
  EXPECT_EQ(j["rmse"].get<double>(), 0.0);
  EXPECT_EQ(j["delta_1_1"].get<double>(), 1.0);
  EXPECT_EQ(j["pixel_count"].get<int>(), 20);
}

TEST_F(CliTest, EvalSsiJsonToStdout) {
  ScalarMap gt(3, 3), pred(3, 3);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = 2.0 + 0.5 * static_cast<double>(i);
    pred[i] = 0.5 * gt[i] - 0.25;
  }
  io::write_pfm(path("p.pfm"), pred);
  io::write_pfm(path("g.pfm"), gt);
  const CliRun r = run("eval " + path("p.pfm") + " " + path("g.pfm") + " --align ssi --json -");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out.substr(r.out.find('{')));
  EXPECT_EQ(j["align"], "ssi");
  EXPECT_NEAR(j["scale"].get<double>(), 2.0, 1e-12);
  EXPECT_NEAR(j["shift"].get<double>(), 0.5, 1e-12);
  EXPECT_NEAR(j["rmse"].get<double>(), 0.0, 1e-12);
}

TEST_F(CliTest, MaskOnWhiteImageWarns) {
  io::write_image(path("white.png"), ImageRGB(8, 8, Vec3::Ones()));
  const CliRun r = run("mask " + path("white.png") + " -o " + path("m.png"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning: mask is empty"), std::string::npos) << r.err;
  const Mask m = io::read_mask(path("m.png"));
  for (auto v : m) EXPECT_EQ(v, 0);
}

TEST_F(CliTest, MaskThresholdFlag) {
  ImageGray g(1, 2);
  g[0] = 0.5;
  g[1] = 0.9;
  io::write_image(path("g.png"), g, 16);
  const CliRun r = run("mask " + path("g.png") + " -t 0.8 -o " + path("m.png"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.err.empty()) << r.err;
  const Mask m = io::read_mask(path("m.png"));
  EXPECT_EQ(m[0], 1);
  EXPECT_EQ(m[1], 0);
}

TEST_F(CliTest, SelfcheckPassesQuickly) {
  const auto t0 = std::chrono::steady_clock::now();
  const CliRun r = run("selfcheck");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_LT(secs, 60.0);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
}

TEST_F(CliTest, UnknownFlagAndMissingFiles) {
  CliRun r = run("eval a.pfm b.pfm --bogus");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos) << r.err;

  r = run("eval " + path("nope.pfm") + " " + path("nope2.pfm"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("nope.pfm"), std::string::npos) << r.err;

  r = run("render " + path("missing.yaml"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("missing.yaml"), std::string::npos) << r.err;

  r = run("frobnicate");
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, RenderPpsCloudRefineFlow) {
  CliRun r = run("render " + config() + " -o " + path("scene"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"image.png", "depth.pfm", "albedo.png"}) EXPECT_TRUE(fs::exists(dir_ / "scene" / f)) << f;
  const DepthMap depth = io::read_pfm(path("scene/depth.pfm"));
  EXPECT_EQ(depth.width(), 64u);
  const ImageRGB img = io::read_image_rgb(path("scene/image.png"));
  EXPECT_EQ(img.height(), 64u);

  r = run("pps " + path("scene/depth.pfm") + " " + config() + " -o " + path("pps"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_pfm(path("pps/pps.pfm")).size(), 64u * 64u);
  EXPECT_TRUE(fs::exists(dir_ / "pps" / "pps.png"));

  r = run("cloud " + path("scene/depth.pfm") + " " + path("scene/image.png") + " " + config() + " -o " +
          path("c.ply"));
  ASSERT_EQ(r.code, 0) << r.err;
  const io::PointCloud cloud = io::read_ply(path("c.ply"));
  EXPECT_EQ(cloud.positions.size(), 64u * 64u);
  EXPECT_EQ(cloud.colors.size(), 64u * 64u);

  r = run("refine " + path("scene/depth.pfm") + " " + path("scene/image.png") + " " + config() +
          " --set refine.max_iters=5 -o " + path("ref"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("iterations"), std::string::npos) << r.out;
  const std::string trace = slurp(path("ref/loss_trace.csv"));
  EXPECT_EQ(trace.rfind("iteration,loss\n0,", 0), 0u) << trace;
  EXPECT_EQ(io::read_pfm(path("ref/refined.pfm")).size(), 64u * 64u);
}

TEST_F(CliTest, OutputsAreDeterministic) {
  ASSERT_EQ(run("render " + config() + " -o " + path("a")).code, 0);
  ASSERT_EQ(run("render " + config() + " -o " + path("b")).code, 0);
  for (const char* f : {"image.png", "depth.pfm", "albedo.png"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;

  const std::string refine_args = "refine " + path("a/depth.pfm") + " " + path("a/image.png") + " " + config() +
                                  " --set refine.max_iters=5 -o ";
  ASSERT_EQ(run(refine_args + path("ra")).code, 0);
  ASSERT_EQ(run(refine_args + path("rb")).code, 0);
  EXPECT_EQ(slurp(dir_ / "ra" / "refined.pfm"), slurp(dir_ / "rb" / "refined.pfm"));
  EXPECT_EQ(slurp(dir_ / "ra" / "loss_trace.csv"), slurp(dir_ / "rb" / "loss_trace.csv"));

  const std::string cloud_args = "cloud " + path("a/depth.pfm") + " " + config() + " -o ";
  ASSERT_EQ(run(cloud_args + path("a.ply")).code, 0);
  ASSERT_EQ(run(cloud_args + path("b.ply")).code, 0);
  EXPECT_EQ(slurp(path("a.ply")), slurp(path("b.ply")));
}

TEST_F(CliTest, ConfigOverrideErrors) {
  CliRun r = run("render " + config() + " --set render.gama=2 -o " + path("x"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("render.gama"), std::string::npos) << r.err;
}
