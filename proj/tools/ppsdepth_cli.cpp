// ppsdepth: command-line front end for the near-field shading depth toolkit.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ppsdepth/geometry.hpp"
#include "ppsdepth/io/colormap.hpp"
#include "ppsdepth/io/config.hpp"
#include "ppsdepth/io/image.hpp"
#include "ppsdepth/io/pfm.hpp"
#include "ppsdepth/io/ply.hpp"
#include "ppsdepth/metrics.hpp"
#include "ppsdepth/photometrics.hpp"
#include "ppsdepth/refine.hpp"
#include "ppsdepth/scene.hpp"
#include "ppsdepth/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace ppsdepth;

namespace {

void require_input(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw FormatError(std::string(what) + " '" + path + "' does not exist");
  if (fs::is_directory(path)) throw FormatError(std::string(what) + " '" + path + "' is a directory");
}

std::string out_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

void check_depth_size(const DepthMap& depth, const CameraIntrinsics& camera, const std::string& path) {
  if (depth.height() != camera.height || depth.width() != camera.width)
    throw std::invalid_argument(path + ": depth is " + std::to_string(depth.height()) + "x" +
                                std::to_string(depth.width()) + " but the config camera is " +
                                std::to_string(camera.height) + "x" + std::to_string(camera.width));
}

int cmd_render(const std::string& config_path, const std::vector<std::string>& sets, const std::string& out_dir) {
  const io::PipelineConfig cfg = io::load_config(config_path, sets);
  const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
  const SceneTruth truth = generate_scene(cfg.scene, cfg.camera);
  const RenderResult r = render(truth.depth, cfg.camera, cfg.light, truth.albedo, cfg.render);
  io::write_image(out_path(dir, "image.png"), r.image, cfg.image_bit_depth);
  io::write_pfm(out_path(dir, "depth.pfm"), truth.depth);
  io::write_image(out_path(dir, "albedo.png"), truth.albedo, 16);
  const std::size_t clamped = count_valid(r.clamped);
  std::cout << "wrote " << dir << "/{image.png,depth.pfm,albedo.png} (" << cfg.camera.width << "x"
            << cfg.camera.height << ", " << clamped << " clamped pixels)\n";
  if (clamped > 0) std::cerr << "warning: " << clamped << " pixels saturated during rendering\n";
  return 0;
}

int cmd_pps(const std::string& depth_path, const std::string& config_path, const std::vector<std::string>& sets,
            const std::string& out_dir) {
  require_input(depth_path, "depth");
  const io::PipelineConfig cfg = io::load_config(config_path, sets);
  const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
  const DepthMap depth = io::read_pfm(depth_path);
  check_depth_size(depth, cfg.camera, depth_path);
  const PPSField field = pps_from_depth(depth, cfg.camera, cfg.light);
  io::write_pfm(out_path(dir, "pps.pfm"), field.pps);
  io::write_image(out_path(dir, "pps.png"), io::false_color(field.pps, &field.valid), 8);
  std::cout << "wrote " << dir << "/{pps.pfm,pps.png}\n";
  return 0;
}

int cmd_mask(const std::string& image_path, double threshold, const std::string& output) {
  require_input(image_path, "image");
  const ImageGray gray = io::read_image_gray(image_path);
  const Mask mask = specular_mask(gray, threshold);
  io::write_mask(output, mask);
  const std::size_t valid = count_valid(mask);
  std::cout << "wrote " << output << " (" << valid << " of " << mask.size() << " pixels valid)\n";
  if (valid == 0) std::cerr << "warning: mask is empty; every pixel is at or above threshold " << threshold << "\n";
  return 0;
}

int cmd_refine(const std::string& init_path, const std::string& image_path, const std::string& config_path,
               const std::vector<std::string>& sets, const std::string& out_dir, const std::string& mask_path) {
  require_input(init_path, "initial depth");
  require_input(image_path, "image");
  io::PipelineConfig cfg = io::load_config(config_path, sets);
  const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
  const DepthMap init = io::read_pfm(init_path);
  check_depth_size(init, cfg.camera, init_path);
  const ImageRGB image = io::read_image_rgb(image_path);
  require_same_shape(init, image, "refine: image");
  Mask mask = specular_mask(luminance(image), cfg.mask_threshold);
  if (!mask_path.empty()) {
    require_input(mask_path, "mask");
    const Mask extra = io::read_mask(mask_path);
    require_same_shape(mask, extra, "refine: mask");
    mask = mask_and(mask, extra);
  }
  if (cfg.reference_path) {
    cfg.refine.reference = io::read_pfm(*cfg.reference_path);
    require_same_shape(init, *cfg.refine.reference, "refine: reference");
  }
  const RefineResult res = refine_depth(init, image, cfg.camera, cfg.light, mask, cfg.refine);
  io::write_pfm(out_path(dir, "refined.pfm"), res.refined);
  io::write_loss_trace(out_path(dir, "loss_trace.csv"), res.loss_trace);
  std::cout.precision(10);
  std::cout << "iterations " << res.iterations_used << "\nconverged " << (res.converged ? "true" : "false")
            << "\ninitial_loss " << res.loss_trace.front() << "\nfinal_loss " << res.loss_trace.back() << "\nwrote "
            << dir << "/{refined.pfm,loss_trace.csv}\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& align,
             const std::string& mask_path, const std::string& json_path) {
  require_input(pred_path, "prediction");
  require_input(gt_path, "ground truth");
  const DepthMap pred = io::read_pfm(pred_path);
  const DepthMap gt = io::read_pfm(gt_path);
  require_same_shape(pred, gt, "eval");
  Mask mask(gt.height(), gt.width(), 0);
  for (std::size_t i = 0; i < gt.size(); ++i) mask[i] = gt[i] > 0.0 && std::isfinite(gt[i]) ? 1 : 0;
  if (!mask_path.empty()) {
    require_input(mask_path, "mask");
    const Mask extra = io::read_mask(mask_path);
    require_same_shape(mask, extra, "eval: mask");
    mask = mask_and(mask, extra);
  }
  const MetricReport rep = depth_metrics(pred, gt, mask, align == "ssi" ? Alignment::ssi : Alignment::none);
  std::cout << to_text(rep);
  if (rep.excluded_log > 0)
    std::cerr << "warning: " << rep.excluded_log << " non-positive predictions excluded from rmse_log\n";
  if (!json_path.empty()) {
    nlohmann::ordered_json j;
    j["align"] = to_string(rep.align);
    j["rmse"] = rep.rmse;
    j["rmse_log"] = rep.rmse_log;
    j["absrel"] = rep.absrel;
    j["sqrel_x1000"] = rep.sqrel_x1000;
    j["delta_1_1"] = rep.delta_1_1;
    j["pixel_count"] = rep.pixel_count;
    j["excluded_log"] = rep.excluded_log;
    if (rep.align == Alignment::ssi) {
      j["scale"] = rep.alignment.scale;
      j["shift"] = rep.alignment.shift;
    }
    const std::string text = j.dump(2) + "\n";
    if (json_path == "-") {
      std::cout << text;
    } else {
      const io::Bytes bytes(text.begin(), text.end());
      io::write_file(json_path, bytes);
    }
  }
  return 0;
}

int cmd_cloud(const std::vector<std::string>& positional, const std::vector<std::string>& sets,
              const std::string& output, bool ascii, const std::string& mask_path) {
  const std::string& depth_path = positional.front();
  const std::string& config_path = positional.back();
  const std::optional<std::string> image_path =
      positional.size() == 3 ? std::optional<std::string>(positional[1]) : std::nullopt;
  require_input(depth_path, "depth");
  const io::PipelineConfig cfg = io::load_config(config_path, sets);
  const DepthMap depth = io::read_pfm(depth_path);
  check_depth_size(depth, cfg.camera, depth_path);
  std::optional<ImageRGB> color;
  if (image_path) {
    require_input(*image_path, "image");
    color = io::read_image_rgb(*image_path);
  }
  Mask mask = full_mask(depth.height(), depth.width());
  if (!mask_path.empty()) {
    require_input(mask_path, "mask");
    mask = io::read_mask(mask_path);
  }
  const std::string path = output.empty() ? out_path(cfg.output_dir, "cloud.ply") : output;
  const bool binary = ascii ? false : cfg.ply_binary;
  const io::PointCloud cloud = io::export_pointcloud(
      depth, cfg.camera, mask, color, path, binary ? io::PlyEncoding::binary_little_endian : io::PlyEncoding::ascii);
  std::cout << "wrote " << path << " (" << cloud.positions.size() << " vertices)\n";
  return 0;
}

int cmd_selfcheck() {
  const auto results = run_selfcheck();
  bool ok = true;
  double total = 0.0;
  for (const auto& r : results) {
    std::printf("%s  %-40s %7.3fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds, r.detail.c_str());
    ok = ok && r.passed;
    total += r.seconds;
  }
  std::printf("selfcheck %s in %.2fs\n", ok ? "passed" : "FAILED", total);
  if (!ok) std::fprintf(stderr, "error: selfcheck failed\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-field shading depth toolkit"};
  app.require_subcommand(1);

  std::vector<std::string> sets;
  std::string out_dir;
  auto add_sets = [&](CLI::App* sub) {
    sub->add_option("--set", sets, "Override a config value, e.g. --set light.mu=1 (repeatable)");
  };

  std::string config;
  auto* render_cmd = app.add_subcommand("render", "Render image, depth and albedo from the config's scene");
  render_cmd->add_option("config", config, "Config file")->required();
  render_cmd->add_option("-o,--out", out_dir, "Output directory (default: output.dir)");
  add_sets(render_cmd);

  std::string depth_path;
  auto* pps_cmd = app.add_subcommand("pps", "Per-pixel shading of a depth map (PFM + false-color PNG)");
  pps_cmd->add_option("depth", depth_path, "Depth map (PFM)")->required();
  pps_cmd->add_option("config", config, "Config file")->required();
  pps_cmd->add_option("-o,--out", out_dir, "Output directory (default: output.dir)");
  add_sets(pps_cmd);

  std::string image_path;
  double threshold = kSpecularThreshold;
  std::string mask_out = "mask.png";
  auto* mask_cmd = app.add_subcommand("mask", "Specular mask of an image");
  mask_cmd->add_option("image", image_path, "Input image (PNG/PPM/PGM)")->required();
  mask_cmd->add_option("-t,--threshold", threshold, "Gray level at or above which a pixel is masked out")
      ->capture_default_str();
  mask_cmd->add_option("-o,--out", mask_out, "Output PNG")->capture_default_str();

  std::string init_path, extra_mask;
  auto* refine_cmd = app.add_subcommand("refine", "Refine a depth map against an image");
  refine_cmd->add_option("init", init_path, "Initial depth (PFM)")->required();
  refine_cmd->add_option("image", image_path, "Image (PNG/PPM/PGM)")->required();
  refine_cmd->add_option("config", config, "Config file")->required();
  refine_cmd->add_option("-o,--out", out_dir, "Output directory (default: output.dir)");
  refine_cmd->add_option("--mask", extra_mask, "Extra validity mask PNG (nonzero = valid)");
  add_sets(refine_cmd);

  std::string pred_path, gt_path, align = "none", json_path;
  auto* eval_cmd = app.add_subcommand("eval", "Depth metrics of a prediction against ground truth");
  eval_cmd->add_option("pred", pred_path, "Predicted depth (PFM)")->required();
  eval_cmd->add_option("gt", gt_path, "Ground-truth depth (PFM)")->required();
  eval_cmd->add_option("--align", align, "Alignment before scoring")
      ->check(CLI::IsMember({"none", "ssi"}))
      ->capture_default_str();
  eval_cmd->add_option("--mask", extra_mask, "Validity mask PNG (nonzero = valid)");
  eval_cmd->add_option("--json", json_path, "Also write the report as JSON to this file ('-' for stdout)");

  std::vector<std::string> cloud_args;
  std::string ply_out;
  bool ascii = false;
  auto* cloud_cmd = app.add_subcommand("cloud", "Export a depth map as a PLY point cloud");
  cloud_cmd->add_option("args", cloud_args, "<depth.pfm> [image] <config>")->required()->expected(2, 3);
  cloud_cmd->add_option("-o,--out", ply_out, "Output PLY (default: output.dir/cloud.ply)");
  cloud_cmd->add_flag("--ascii", ascii, "Write ASCII PLY instead of binary");
  cloud_cmd->add_option("--mask", extra_mask, "Validity mask PNG (nonzero = valid)");
  add_sets(cloud_cmd);

  auto* selfcheck_cmd = app.add_subcommand("selfcheck", "Run the analytic invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*render_cmd) return cmd_render(config, sets, out_dir);
    if (*pps_cmd) return cmd_pps(depth_path, config, sets, out_dir);
    if (*mask_cmd) return cmd_mask(image_path, threshold, mask_out);
    if (*refine_cmd) return cmd_refine(init_path, image_path, config, sets, out_dir, extra_mask);
    if (*eval_cmd) return cmd_eval(pred_path, gt_path, align, extra_mask, json_path);
    if (*cloud_cmd) return cmd_cloud(cloud_args, sets, ply_out, ascii, extra_mask);
    if (*selfcheck_cmd) return cmd_selfcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
