#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "ppsdepth/errors.hpp"
#include "ppsdepth/geometry.hpp"
#include "ppsdepth/losses.hpp"
#include "ppsdepth/photometrics.hpp"
#include "ppsdepth/refine.hpp"
#include "ppsdepth/scene.hpp"

namespace ppsdepth::io {

/// Everything a CLI run needs. Loaded from a YAML file; see docs/config.md.
struct PipelineConfig {
  CameraIntrinsics camera;
  LightSpec light;
  RenderModel render;
  LossWeights loss_weights;
  RefineConfig refine;
  /// Optional reference depth for the refine anchor term (PFM path).
  std::optional<std::string> reference_path;
  double mask_threshold = kSpecularThreshold;
  SceneSpec scene;
  std::string output_dir = ".";
  int image_bit_depth = 16;
  bool ply_binary = true;

  void validate() const {
    camera.validate();
    light.validate();
    render.validate();
    loss_weights.validate();
    refine.validate();
    if (!(mask_threshold > 0.0 && mask_threshold <= 1.0))
      throw std::invalid_argument("config: mask.threshold must be in (0, 1]");
    if (image_bit_depth != 8 && image_bit_depth != 16)
      throw std::invalid_argument("config: output.bit_depth must be 8 or 16");
    if (reference_path && !std::filesystem::exists(*reference_path))
      throw std::invalid_argument("config: refine.reference '" + *reference_path + "' does not exist");
  }
};

namespace detail {

inline std::string join_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline std::string where(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  if (m.line < 0) return "";
  return " (line " + std::to_string(m.line + 1) + ")";
}

/// A mapping node plus its dotted path; rejects keys nobody asked about.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap())
      throw FormatError("config: '" + path_ + "' must be a mapping" + where(node_));
  }

  bool present() const { return node_ && node_.IsMap(); }

  YAML::Node raw(const std::string& key) {
    used_.insert(key);
    return present() ? node_[key] : YAML::Node();
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    YAML::Node n = raw(key);
    if (!n || n.IsNull()) return;
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      throw FormatError("config: '" + join_key(path_, key) + "' has an invalid value" + where(n));
    }
  }

  void get_vec3(const std::string& key, Vec3& out) {
    YAML::Node n = raw(key);
    if (!n || n.IsNull()) return;
    if (!n.IsSequence() || n.size() != 3)
      throw FormatError("config: '" + join_key(path_, key) + "' must be a list of 3 numbers" + where(n));
    try {
      for (std::size_t i = 0; i < 3; ++i) out[static_cast<Eigen::Index>(i)] = n[i].as<double>();
    } catch (const YAML::Exception&) {
      throw FormatError("config: '" + join_key(path_, key) + "' must be a list of 3 numbers" + where(n));
    }
  }

  void get_vec2(const std::string& key, Eigen::Vector2d& out) {
    YAML::Node n = raw(key);
    if (!n || n.IsNull()) return;
    if (!n.IsSequence() || n.size() != 2)
      throw FormatError("config: '" + join_key(path_, key) + "' must be a list of 2 numbers" + where(n));
    try {
      out = {n[0].as<double>(), n[1].as<double>()};
    } catch (const YAML::Exception&) {
      throw FormatError("config: '" + join_key(path_, key) + "' must be a list of 2 numbers" + where(n));
    }
  }

  Section child(const std::string& key) { return Section(raw(key), join_key(path_, key)); }

  void finish() const {
    if (!present()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!used_.count(key)) throw FormatError("config: unknown key '" + join_key(path_, key) + "'" + where(kv.first));
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

inline SceneShape parse_shape(Section& s) {
  std::string kind = "tube";
  s.get("kind", kind);
  if (kind == "plane") {
    PlaneScene p;
    s.get("z0", p.z0);
    s.get("slope_x", p.slope_x);
    s.get("slope_y", p.slope_y);
    return p;
  }
  if (kind == "sphere-cap") {
    SphereCapScene p;
    s.get_vec3("center", p.center);
    s.get("radius", p.radius);
    s.get("backdrop_depth", p.backdrop_depth);
    return p;
  }
  if (kind == "tube") {
    TubeScene p;
    s.get("radius", p.radius);
    s.get_vec2("offset", p.offset);
    s.get("cap_depth", p.cap_depth);
    return p;
  }
  if (kind == "bump-field") {
    BumpFieldScene p;
    s.get("z0", p.z0);
    s.get("amplitude", p.amplitude);
    s.get("wavelength", p.wavelength);
    s.get("phase_x", p.phase_x);
    s.get("phase_y", p.phase_y);
    return p;
  }
  throw FormatError("config: scene.kind '" + kind + "' is not one of plane, sphere-cap, tube, bump-field");
}

}  // namespace detail

/// Sets `dotted.key=value` on a YAML tree; value is parsed as YAML so
/// "[0,0,1]" becomes a list and "3" a scalar.
inline void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override '" + assignment + "' must have the form key.path=value");
  const std::string path = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument("override '" + assignment + "': cannot parse value: " + e.what());
  }
  std::vector<std::string> keys;
  for (std::size_t start = 0;;) {
    const auto dot = path.find('.', start);
    keys.push_back(path.substr(start, dot - start));
    if (keys.back().empty()) throw std::invalid_argument("override '" + assignment + "' has an empty key segment");
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!root || !root.IsMap()) root = YAML::Node(YAML::NodeType::Map);
  YAML::Node node = root;
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    YAML::Node next = node[keys[i]];
    if (!next.IsMap()) next = YAML::Node(YAML::NodeType::Map);
    node.reset(next);
  }
  node[keys.back()] = value;
}

inline PipelineConfig parse_config(const YAML::Node& root, const std::filesystem::path& base_dir = ".") {
  if (root && !root.IsNull() && !root.IsMap()) throw FormatError("config: top level must be a mapping");
  detail::Section top(root, "");
  PipelineConfig cfg;

  auto cam = top.child("camera");
  if (!cam.present()) throw FormatError("config: missing required section 'camera'");
  cam.get("fx", cfg.camera.fx);
  cam.get("fy", cfg.camera.fy);
  cam.get("cx", cfg.camera.cx);
  cam.get("cy", cfg.camera.cy);
  cam.get("width", cfg.camera.width);
  cam.get("height", cfg.camera.height);
  cam.finish();

  auto light = top.child("light");
  light.get_vec3("position", cfg.light.position);
  light.get_vec3("direction", cfg.light.direction);
  if (cfg.light.direction.norm() > 0.0) cfg.light.direction.normalize();
  light.get("mu", cfg.light.mu);
  light.finish();

  auto render = top.child("render");
  render.get("sigma0", cfg.render.sigma0);
  render.get("gain", cfg.render.gain);
  render.get("gamma", cfg.render.gamma);
  render.get("spread_mu", cfg.render.spread_mu);
  render.finish();

  auto lw = top.child("loss_weights");
  lw.get("ssi", cfg.loss_weights.alpha_ssi);
  lw.get("reg", cfg.loss_weights.alpha_reg);
  lw.get("pps_sup", cfg.loss_weights.alpha_pps_sup);
  lw.get("pps_corr", cfg.loss_weights.alpha_pps_corr);
  lw.get("vnl", cfg.loss_weights.alpha_vnl);
  lw.finish();

  auto rf = top.child("refine");
  rf.get("max_iters", cfg.refine.max_iters);
  rf.get("step_size", cfg.refine.step_size);
  rf.get("weight_corr", cfg.refine.weight_corr);
  rf.get("weight_smooth", cfg.refine.weight_smooth);
  rf.get("stop_tol", cfg.refine.stop_tol);
  rf.get("grad_tol", cfg.refine.grad_tol);
  rf.get("max_halvings", cfg.refine.max_halvings);
  rf.get("barzilai_borwein", cfg.refine.barzilai_borwein);
  rf.get("pyramid_levels", cfg.refine.pyramid_levels);
  rf.get("level_gain", cfg.refine.level_gain);
  rf.get("seed", cfg.refine.seed);
  rf.get("weight_reference", cfg.refine.weight_reference);
  std::string reference;
  rf.get("reference", reference);
  if (!reference.empty()) {
    std::filesystem::path p(reference);
    if (p.is_relative()) p = base_dir / p;
    cfg.reference_path = p.string();
  }
  rf.finish();

  auto mask = top.child("mask");
  mask.get("threshold", cfg.mask_threshold);
  mask.finish();

  auto scene = top.child("scene");
  if (scene.present()) cfg.scene.shape = detail::parse_shape(scene);
  auto albedo = scene.child("albedo");
  std::string mode = "constant";
  albedo.get("mode", mode);
  if (mode == "constant")
    cfg.scene.albedo.mode = AlbedoSpec::Mode::constant;
  else if (mode == "procedural")
    cfg.scene.albedo.mode = AlbedoSpec::Mode::procedural;
  else
    throw FormatError("config: scene.albedo.mode '" + mode + "' is not one of constant, procedural");
  albedo.get_vec3("base", cfg.scene.albedo.base);
  albedo.get("amplitude", cfg.scene.albedo.amplitude);
  albedo.get("frequency", cfg.scene.albedo.frequency);
  albedo.get("seed", cfg.scene.albedo.seed);
  albedo.finish();
  scene.finish();

  auto out = top.child("output");
  out.get("dir", cfg.output_dir);
  out.get("bit_depth", cfg.image_bit_depth);
  std::string ply = "binary";
  out.get("ply", ply);
  if (ply != "binary" && ply != "ascii") throw FormatError("config: output.ply must be 'binary' or 'ascii'");
  cfg.ply_binary = ply == "binary";
  out.finish();

  top.finish();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return cfg;
}

inline PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  if (!std::filesystem::exists(path)) throw FormatError("config '" + path + "' does not exist");
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(root, o);
  try {
    return parse_config(root, std::filesystem::path(path).parent_path());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace ppsdepth::io
