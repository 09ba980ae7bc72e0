#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/costvol.hpp"
#include "geosweep/depthmap.hpp"
#include "geosweep/fusion.hpp"
#include "geosweep/gcp.hpp"
#include "geosweep/geometry.hpp"
#include "geosweep/hypotheses.hpp"
#include "geosweep/io.hpp"
#include "geosweep/normals.hpp"
#include "geosweep/png.hpp"
#include "geosweep/synth.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

inline constexpr int kConfigFormatVersion = 1;
inline constexpr int kNumStages = 3;

struct StageSettings {
  int num_samples = 0;
  double interval_scale = 0.0;
};

struct GcpSettings {
  int window = 3;
  bool use_neighbor_normal = true;
  std::string out_of_range = "clamp";  // or "zero"
  double eps_ray = 1e-8;
};

struct FusionSettings {
  bool enabled = true;
  double tau_pix = 1.0;
  double tau_rel = 0.01;
  int min_views = 2;
  double min_confidence = 0.0;
  double voxel_size = 0.0;
};

/// Synthetic scene plus camera rig, fully determined by the config.
struct SceneSettings {
  SceneSpec scene;
  int views = 5;
  double baseline = 0.5;
  Eigen::Vector3d look_at = Eigen::Vector3d(0, 0, 2);
  int width = 160, height = 128;
  double focal = 250.0;
  double noise_sigma = 0.0;
};

struct InputSettings {
  std::vector<std::string> images;    // 3-channel PFM per view
  std::vector<std::string> cameras;   // camera text file per view
  std::vector<std::string> gt_depths; // optional; per view, parallel to images
};

struct PipelineConfig {
  uint64_t seed = 1;
  std::optional<SceneSettings> scene;
  std::optional<InputSettings> input;
  double depth_min = 0.0, depth_max = 0.0;
  std::array<StageSettings, kNumStages> stages{{{48, 4.0}, {32, 1.0}, {8, 0.5}}};
  GcpSettings gcp;
  std::string aggregation = "gcp";
  std::string kernel_file;
  std::string normal_source = "gt";
  std::vector<std::string> normal_files;  // per view, "file" source
  AxisConvention normal_axes;
  int normal_window = 5;
  bool parabola_refine = false;
  FusionSettings fusion;
  std::string output_dir;
  bool save_png = true;
};

// ---------------------------------------------------------------------------
// Config parsing: strict, unknown keys rejected, defaults documented in
// docs/formats.md.

namespace config_detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& ctx,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: " + ctx + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed)
      if (it.key() == key) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + ctx);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad type for '") + key + "'");
  }
}

inline Eigen::Vector3d get_vec3(const json& j, const char* key,
                                const Eigen::Vector3d& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3)
    throw ConfigError(std::string("config: '") + key + "' must be an array of 3 numbers");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

inline SceneSettings parse_scene(const json& j) {
  check_keys(j, "scene",
             {"primitive", "plane", "sphere", "texture", "extent", "views", "baseline",
              "look_at", "width", "height", "focal", "noise_sigma"});
  SceneSettings s;
  const std::string primitive = get_or<std::string>(j, "primitive", "plane");
  if (primitive == "plane") {
    PlaneSpec plane;
    if (j.contains("plane")) {
      check_keys(j.at("plane"), "scene.plane", {"point", "normal"});
      plane.point = get_vec3(j.at("plane"), "point", plane.point);
      plane.normal = get_vec3(j.at("plane"), "normal", plane.normal);
    }
    const double n = plane.normal.norm();
    if (!(n > 0.0)) throw ConfigError("config: scene.plane.normal must be nonzero");
    // Skip the division for already-unit input so parse(config_to_json(cfg))
    // reproduces cfg bit for bit.
    if (std::abs(n - 1.0) > 1e-12) plane.normal /= n;
    s.scene.primitive = plane;
  } else if (primitive == "sphere") {
    SphereSpec sphere;
    if (j.contains("sphere")) {
      check_keys(j.at("sphere"), "scene.sphere", {"center", "radius"});
      sphere.center = get_vec3(j.at("sphere"), "center", sphere.center);
      sphere.radius = get_or<double>(j.at("sphere"), "radius", sphere.radius);
    }
    if (!(sphere.radius > 0.0)) throw ConfigError("config: scene.sphere.radius must be > 0");
    s.scene.primitive = sphere;
  } else {
    throw ConfigError("config: scene.primitive must be 'plane' or 'sphere'");
  }
  if (j.contains("texture")) {
    check_keys(j.at("texture"), "scene.texture", {"frequency", "octaves", "seed"});
    s.scene.texture.frequency = get_or<double>(j.at("texture"), "frequency", 8.0);
    s.scene.texture.octaves = get_or<int>(j.at("texture"), "octaves", 3);
    s.scene.texture.seed = get_or<uint64_t>(j.at("texture"), "seed", 1);
    if (!(s.scene.texture.frequency > 0.0) || s.scene.texture.octaves < 1)
      throw ConfigError("config: bad scene.texture");
  }
  s.scene.extent = get_or<double>(j, "extent", 1.0);
  if (!(s.scene.extent > 0.0)) throw ConfigError("config: scene.extent must be > 0");
  s.views = get_or<int>(j, "views", 5);
  s.baseline = get_or<double>(j, "baseline", 0.5);
  s.look_at = get_vec3(j, "look_at", s.look_at);
  s.width = get_or<int>(j, "width", 160);
  s.height = get_or<int>(j, "height", 128);
  s.focal = get_or<double>(j, "focal", 250.0);
  s.noise_sigma = get_or<double>(j, "noise_sigma", 0.0);
  if (s.views < 2) throw ConfigError("config: scene.views must be >= 2");
  if (s.noise_sigma < 0.0) throw ConfigError("config: scene.noise_sigma must be >= 0");
  return s;
}

inline InputSettings parse_input(const json& j) {
  check_keys(j, "input", {"images", "cameras", "gt_depths"});
  InputSettings in;
  in.images = get_or<std::vector<std::string>>(j, "images", {});
  in.cameras = get_or<std::vector<std::string>>(j, "cameras", {});
  in.gt_depths = get_or<std::vector<std::string>>(j, "gt_depths", {});
  if (in.images.size() < 2) throw ConfigError("config: input.images needs >= 2 views");
  if (in.cameras.size() != in.images.size())
    throw ConfigError("config: input.cameras must match input.images");
  if (!in.gt_depths.empty() && in.gt_depths.size() != in.images.size())
    throw ConfigError("config: input.gt_depths must be empty or match input.images");
  return in;
}

}  // namespace config_detail

inline PipelineConfig parse_config(const nlohmann::json& j) {
  using config_detail::check_keys;
  using config_detail::get_or;
  check_keys(j, "root",
             {"format_version", "seed", "scene", "input", "depth_min", "depth_max",
              "stages", "gcp", "aggregation", "kernel_file", "normal_source",
              "normal_files", "normal_axes", "normal_window", "parabola_refine",
              "fusion", "output_dir", "save_png"});
  if (j.contains("format_version") && j.at("format_version").get<int>() != kConfigFormatVersion)
    throw ConfigError("config: unsupported format_version");

  PipelineConfig cfg;
  cfg.seed = get_or<uint64_t>(j, "seed", 1);
  if (j.contains("scene")) cfg.scene = config_detail::parse_scene(j.at("scene"));
  if (j.contains("input")) cfg.input = config_detail::parse_input(j.at("input"));
  if (cfg.scene.has_value() == cfg.input.has_value())
    throw ConfigError("config: exactly one of 'scene' or 'input' is required");

  if (!j.contains("depth_min") || !j.contains("depth_max"))
    throw ConfigError("config: depth_min and depth_max are required");
  cfg.depth_min = j.at("depth_min").get<double>();
  cfg.depth_max = j.at("depth_max").get<double>();
  if (!(cfg.depth_min > 0.0) || !(cfg.depth_max > cfg.depth_min))
    throw ConfigError("config: require 0 < depth_min < depth_max");

  if (j.contains("stages")) {
    const auto& stages = j.at("stages");
    if (!stages.is_array() || stages.size() != kNumStages)
      throw ConfigError("config: stages must be an array of 3 entries");
    for (int g = 0; g < kNumStages; ++g) {
      check_keys(stages[g], "stages[" + std::to_string(g) + "]",
                 {"num_samples", "interval_scale"});
      cfg.stages[g].num_samples =
          get_or<int>(stages[g], "num_samples", cfg.stages[g].num_samples);
      cfg.stages[g].interval_scale =
          get_or<double>(stages[g], "interval_scale", cfg.stages[g].interval_scale);
      if (cfg.stages[g].num_samples < 2 || !(cfg.stages[g].interval_scale > 0.0))
        throw ConfigError("config: bad stage " + std::to_string(g));
    }
  }

  if (j.contains("gcp")) {
    check_keys(j.at("gcp"), "gcp",
               {"window", "use_neighbor_normal", "out_of_range", "eps_ray"});
    cfg.gcp.window = get_or<int>(j.at("gcp"), "window", 3);
    cfg.gcp.use_neighbor_normal = get_or<bool>(j.at("gcp"), "use_neighbor_normal", true);
    cfg.gcp.out_of_range = get_or<std::string>(j.at("gcp"), "out_of_range", "clamp");
    cfg.gcp.eps_ray = get_or<double>(j.at("gcp"), "eps_ray", 1e-8);
  }
  if (cfg.gcp.window < 1 || cfg.gcp.window % 2 == 0)
    throw ConfigError("config: gcp.window must be odd and >= 1");
  if (cfg.gcp.out_of_range != "clamp" && cfg.gcp.out_of_range != "zero")
    throw ConfigError("config: gcp.out_of_range must be 'clamp' or 'zero'");
  if (!(cfg.gcp.eps_ray > 0.0)) throw ConfigError("config: gcp.eps_ray must be > 0");

  cfg.aggregation = get_or<std::string>(j, "aggregation", "gcp");
  if (cfg.aggregation != "gcp" && cfg.aggregation != "standard-k3" &&
      cfg.aggregation != "standard-depth5" && cfg.aggregation != "standard-depth7")
    throw ConfigError("config: unknown aggregation mode '" + cfg.aggregation + "'");
  cfg.kernel_file = get_or<std::string>(j, "kernel_file", "");
  if (!cfg.kernel_file.empty() && cfg.aggregation != "gcp")
    throw ConfigError("config: kernel_file applies to the gcp mode only");

  cfg.normal_source = get_or<std::string>(j, "normal_source", "gt");
  if (cfg.normal_source != "gt" && cfg.normal_source != "from-depth" &&
      cfg.normal_source != "file")
    throw ConfigError("config: unknown normal_source '" + cfg.normal_source + "'");
  cfg.normal_files = get_or<std::vector<std::string>>(j, "normal_files", {});
  if (j.contains("normal_axes")) {
    check_keys(j.at("normal_axes"), "normal_axes", {"flip_x", "flip_y", "flip_z"});
    cfg.normal_axes.flip_x = get_or<bool>(j.at("normal_axes"), "flip_x", false);
    cfg.normal_axes.flip_y = get_or<bool>(j.at("normal_axes"), "flip_y", false);
    cfg.normal_axes.flip_z = get_or<bool>(j.at("normal_axes"), "flip_z", false);
  }
  cfg.normal_window = get_or<int>(j, "normal_window", 5);
  if (cfg.normal_window < 3 || cfg.normal_window % 2 == 0)
    throw ConfigError("config: normal_window must be odd and >= 3");
  cfg.parabola_refine = get_or<bool>(j, "parabola_refine", false);

  if (j.contains("fusion")) {
    check_keys(j.at("fusion"), "fusion",
               {"enabled", "tau_pix", "tau_rel", "min_views", "min_confidence",
                "voxel_size"});
    const auto& f = j.at("fusion");
    cfg.fusion.enabled = get_or<bool>(f, "enabled", true);
    cfg.fusion.tau_pix = get_or<double>(f, "tau_pix", 1.0);
    cfg.fusion.tau_rel = get_or<double>(f, "tau_rel", 0.01);
    cfg.fusion.min_views = get_or<int>(f, "min_views", 2);
    cfg.fusion.min_confidence = get_or<double>(f, "min_confidence", 0.0);
    cfg.fusion.voxel_size = get_or<double>(f, "voxel_size", 0.0);
    if (!(cfg.fusion.tau_pix > 0.0) || !(cfg.fusion.tau_rel > 0.0) ||
        cfg.fusion.min_views < 1)
      throw ConfigError("config: bad fusion thresholds");
  }

  cfg.output_dir = get_or<std::string>(j, "output_dir", "");
  cfg.save_png = get_or<bool>(j, "save_png", true);

  const int n_views = cfg.scene ? cfg.scene->views : static_cast<int>(cfg.input->images.size());
  if (cfg.normal_source == "file" &&
      static_cast<int>(cfg.normal_files.size()) != n_views)
    throw ConfigError("config: normal_source 'file' needs one normal_files entry per view");
  if (cfg.normal_source == "gt" && cfg.input && cfg.input->gt_depths.empty())
    throw ConfigError("config: normal_source 'gt' on file input requires input.gt_depths");

  const int width = cfg.scene ? cfg.scene->width : 0;
  const int height = cfg.scene ? cfg.scene->height : 0;
  if (cfg.scene) {
    if (width % 4 != 0 || height % 4 != 0 || width < 16 || height < 16)
      throw ConfigError("config: scene width/height must be multiples of 4, >= 16");
  }
  return cfg;
}

inline nlohmann::json config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["format_version"] = kConfigFormatVersion;
  j["seed"] = cfg.seed;
  if (cfg.scene) {
    const SceneSettings& s = *cfg.scene;
    nlohmann::json sj;
    if (const auto* plane = std::get_if<PlaneSpec>(&s.scene.primitive)) {
      sj["primitive"] = "plane";
      sj["plane"]["point"] = {plane->point.x(), plane->point.y(), plane->point.z()};
      sj["plane"]["normal"] = {plane->normal.x(), plane->normal.y(), plane->normal.z()};
    } else {
      const auto& sphere = std::get<SphereSpec>(s.scene.primitive);
      sj["primitive"] = "sphere";
      sj["sphere"]["center"] = {sphere.center.x(), sphere.center.y(), sphere.center.z()};
      sj["sphere"]["radius"] = sphere.radius;
    }
    sj["texture"] = {{"frequency", s.scene.texture.frequency},
                     {"octaves", s.scene.texture.octaves},
                     {"seed", s.scene.texture.seed}};
    sj["extent"] = s.scene.extent;
    sj["views"] = s.views;
    sj["baseline"] = s.baseline;
    sj["look_at"] = {s.look_at.x(), s.look_at.y(), s.look_at.z()};
    sj["width"] = s.width;
    sj["height"] = s.height;
    sj["focal"] = s.focal;
    sj["noise_sigma"] = s.noise_sigma;
    j["scene"] = sj;
  }
  if (cfg.input) {
    j["input"] = {{"images", cfg.input->images},
                  {"cameras", cfg.input->cameras},
                  {"gt_depths", cfg.input->gt_depths}};
  }
  j["depth_min"] = cfg.depth_min;
  j["depth_max"] = cfg.depth_max;
  j["stages"] = nlohmann::json::array();
  for (const auto& st : cfg.stages)
    j["stages"].push_back(
        {{"num_samples", st.num_samples}, {"interval_scale", st.interval_scale}});
  j["gcp"] = {{"window", cfg.gcp.window},
              {"use_neighbor_normal", cfg.gcp.use_neighbor_normal},
              {"out_of_range", cfg.gcp.out_of_range},
              {"eps_ray", cfg.gcp.eps_ray}};
  j["aggregation"] = cfg.aggregation;
  j["kernel_file"] = cfg.kernel_file;
  j["normal_source"] = cfg.normal_source;
  j["normal_files"] = cfg.normal_files;
  j["normal_axes"] = {{"flip_x", cfg.normal_axes.flip_x},
                      {"flip_y", cfg.normal_axes.flip_y},
                      {"flip_z", cfg.normal_axes.flip_z}};
  j["normal_window"] = cfg.normal_window;
  j["parabola_refine"] = cfg.parabola_refine;
  j["fusion"] = {{"enabled", cfg.fusion.enabled},
                 {"tau_pix", cfg.fusion.tau_pix},
                 {"tau_rel", cfg.fusion.tau_rel},
                 {"min_views", cfg.fusion.min_views},
                 {"min_confidence", cfg.fusion.min_confidence},
                 {"voxel_size", cfg.fusion.voxel_size}};
  j["output_dir"] = cfg.output_dir;
  j["save_png"] = cfg.save_png;
  return j;
}

inline PipelineConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("config: parse failure in " + path + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Pipeline execution.

/// Everything the cascade needs about one view.
struct ViewData {
  Image image;
  CameraModel cam;
  DepthMap gt_depth;      // may be empty (height 0)
  NormalMap gt_normal;    // may be empty
  bool has_gt = false;
};

inline std::vector<ViewData> load_views(const PipelineConfig& cfg) {
  std::vector<ViewData> views;
  if (cfg.scene) {
    const SceneSettings& s = *cfg.scene;
    const auto cams = make_rig(s.views, s.baseline, s.look_at, s.width, s.height, s.focal);
    for (const CameraModel& cam : cams) {
      RenderedView rv = render_view(s.scene, cam);
      if (s.noise_sigma > 0.0) add_image_noise(rv.image, s.noise_sigma, cfg.seed);
      ViewData v;
      v.image = std::move(rv.image);
      v.cam = rv.cam;
      v.gt_depth = std::move(rv.gt_depth);
      v.gt_normal = std::move(rv.gt_normal);
      v.has_gt = true;
      views.push_back(std::move(v));
    }
    return views;
  }
  const InputSettings& in = *cfg.input;
  for (size_t i = 0; i < in.images.size(); ++i) {
    ViewData v;
    v.image = load_image_pfm(in.images[i]);
    if (v.image.width() % 4 != 0 || v.image.height() % 4 != 0 ||
        v.image.width() < 16 || v.image.height() < 16)
      throw DataError("input: image dimensions must be multiples of 4, >= 16: " +
                      in.images[i]);
    v.cam = load_camera(in.cameras[i], v.image.width(), v.image.height());
    if (!in.gt_depths.empty()) {
      v.gt_depth = load_depth_pfm(in.gt_depths[i]);
      if (v.gt_depth.height() != v.image.height() || v.gt_depth.width() != v.image.width())
        throw DataError("input: GT depth size mismatch: " + in.gt_depths[i]);
      v.gt_normal = gt_normal_from_gt_depth(v.gt_depth, v.cam);
      v.has_gt = true;
    }
    views.push_back(std::move(v));
  }
  for (size_t i = 1; i < views.size(); ++i)
    if (views[i].image.width() != views[0].image.width() ||
        views[i].image.height() != views[0].image.height())
      throw DataError("input: all views must share one image size");
  return views;
}

struct StageOutput {
  DepthMap depth;
  Array2D<double> confidence;
};

/// Cascade result for one reference view.
struct ViewResult {
  int reference = 0;
  std::array<StageOutput, kNumStages> stages;
  std::optional<DepthMetrics> metrics;  // against GT at full resolution
  double seconds = 0.0;
};

namespace pipeline_detail {

inline NormalMap fronto_normals(int height, int width) {
  NormalMap map(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) map.set(y, x, Eigen::Vector3d(0, 0, -1));
  return map;
}

/// Normal map for one stage, per the configured source.
inline NormalMap stage_normals(const PipelineConfig& cfg, const ViewData& ref,
                               const NormalMap& full_res_file_normals,
                               const DepthMap* prev_depth, const CameraModel& prev_cam,
                               int level, int height, int width) {
  if (cfg.normal_source == "from-depth") {
    if (prev_depth == nullptr) return fronto_normals(height, width);
    return upsample_normals_nearest(
        depth_to_normal(*prev_depth, prev_cam, cfg.normal_window));
  }
  const NormalMap* full = nullptr;
  if (cfg.normal_source == "gt") {
    full = &ref.gt_normal;
  } else {
    full = &full_res_file_normals;
  }
  NormalMap map = *full;
  for (int s = 0; s < level; ++s) map = downsample_normals(map);
  return map;
}

}  // namespace pipeline_detail

/// Runs the three-stage cascade for one reference view. Weight maps are
/// computed at stage 0 only and nearest-upsampled for the finer stages.
inline ViewResult run_cascade(const PipelineConfig& cfg, const std::vector<ViewData>& views,
                              int reference) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n_views = static_cast<int>(views.size());
  if (reference < 0 || reference >= n_views)
    throw ConfigError("run_cascade: reference view out of range");
  const ViewData& ref = views[reference];

  NormalMap file_normals;
  if (cfg.normal_source == "file")
    file_normals = load_normal_map(cfg.normal_files[reference], cfg.normal_axes);
  if (cfg.normal_source == "gt" && !ref.has_gt)
    throw DataError("run_cascade: normal_source 'gt' but reference has no GT");
  if (cfg.normal_source == "file" &&
      (file_normals.height() != ref.image.height() ||
       file_normals.width() != ref.image.width()))
    throw DataError("run_cascade: normal map size mismatch for view " +
                    std::to_string(reference));

  PropagateOptions prop_opt;
  prop_opt.use_neighbor_normal = cfg.gcp.use_neighbor_normal;
  prop_opt.out_of_range = cfg.gcp.out_of_range == "zero"
                              ? PropagateOptions::OutOfRange::kZeroFill
                              : PropagateOptions::OutOfRange::kClamp;
  prop_opt.eps_ray = cfg.gcp.eps_ray;

  const int k2 = cfg.gcp.window * cfg.gcp.window;
  AggregationKernel kernel;
  if (cfg.aggregation == "gcp") {
    kernel = cfg.kernel_file.empty() ? AggregationKernel::slot_average(k2, kFeatureChannels)
                                     : load_kernel(cfg.kernel_file);
    if (kernel.slots() != k2 || kernel.channels() != kFeatureChannels)
      throw ConfigError("run_cascade: kernel file shape does not match window/channels");
  } else if (cfg.aggregation == "standard-k3") {
    kernel = AggregationKernel::box(k2, kFeatureChannels, 3);
  } else if (cfg.aggregation == "standard-depth5") {
    kernel = AggregationKernel::box(k2, kFeatureChannels, 5);
  } else {
    kernel = AggregationKernel::box(k2, kFeatureChannels, 7);
  }

  const StageConfig stage0{cfg.stages[0].num_samples, cfg.stages[0].interval_scale,
                           cfg.depth_min, cfg.depth_max};
  const double base = base_interval(stage0);

  ViewResult result;
  result.reference = reference;

  std::vector<ViewWeightMap> weights;  // per source view, current stage resolution
  DepthMap prev_depth;
  CameraModel prev_cam;

  for (int g = 0; g < kNumStages; ++g) {
    const int level = kNumStages - 1 - g;
    const CameraModel ref_cam = ref.cam.scaled(level);
    const int height = ref_cam.height, width = ref_cam.width;

    // Hypotheses.
    auto hyps = std::make_shared<HypothesisVolume>();
    if (g == 0) {
      *hyps = sample_initial(stage0, height, width);
    } else {
      const StageConfig cfg_g{cfg.stages[g].num_samples, cfg.stages[g].interval_scale,
                              cfg.depth_min, cfg.depth_max};
      *hyps = refine_cascade(prev_depth, cfg_g, base, g);
    }

    // Two-view correlation volumes.
    const FeatureMap ref_feat = extract_features(ref.image, level);
    std::vector<CostVolume> vols;
    vols.reserve(n_views - 1);
    for (int v = 0; v < n_views; ++v) {
      if (v == reference) continue;
      const FeatureMap src_feat = extract_features(views[v].image, level);
      vols.push_back(two_view_correlation(ref_feat, src_feat, hyps, ref_cam,
                                          views[v].cam.scaled(level)));
    }

    // View weights: stage 0 computes, later stages upsample.
    if (g == 0) {
      weights = compute_view_weights(vols);
    } else {
      for (auto& w : weights) w = upsample_weights_nearest(w);
    }
    CostVolume aggregated = aggregate_views(vols, weights);
    vols.clear();

    // Spatial aggregation.
    CostVolume regularized;
    if (cfg.aggregation == "gcp") {
      const NormalMap normals = pipeline_detail::stage_normals(
          cfg, ref, file_normals, g == 0 ? nullptr : &prev_depth, prev_cam, level,
          height, width);
      const UnfoldedClues clues = unfold_clues(*hyps, normals, cfg.gcp.window);
      const PropagatedCost prop = propagate_cost(aggregated, clues, ref_cam, prop_opt);
      regularized = aggregate_propagated(prop, kernel);
    } else {
      const PropagatedCost prop = unfold_cost(aggregated, cfg.gcp.window);
      regularized = aggregate_propagated(prop, kernel);
    }

    const ProbabilityVolume prob = softmax_probability(regularized);
    DepthMap depth = winner_takes_all(prob, *hyps, cfg.parabola_refine);

    result.stages[g].depth = depth;
    result.stages[g].confidence = prob.confidence;
    prev_depth = std::move(depth);
    prev_cam = ref_cam;
  }

  if (ref.has_gt) {
    const double interval2 = cfg.stages[2].interval_scale * base;
    result.metrics = depth_metrics(result.stages[2].depth, ref.gt_depth,
                                   {interval2, 2.0 * interval2});
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

struct RunReport {
  std::vector<ViewResult> views;
  double stage2_interval = 0.0;
  size_t cloud_points = 0;
  double cloud_rms_plane = -1.0;  // point-to-plane RMS, synth plane scenes only
  double seconds = 0.0;
  std::vector<std::string> warnings;
};

inline nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json j;
  j["stage2_interval"] = report.stage2_interval;
  j["seconds"] = report.seconds;
  j["views"] = nlohmann::json::array();
  for (const ViewResult& v : report.views) {
    nlohmann::json vj;
    vj["reference"] = v.reference;
    vj["seconds"] = v.seconds;
    if (v.metrics) {
      vj["mae"] = v.metrics->mae;
      vj["thresholds"] = v.metrics->thresholds;
      vj["within"] = v.metrics->within;
      vj["valid_fraction"] = v.metrics->valid_fraction;
    }
    j["views"].push_back(vj);
  }
  j["cloud_points"] = report.cloud_points;
  if (report.cloud_rms_plane >= 0.0) j["cloud_rms_plane"] = report.cloud_rms_plane;
  j["warnings"] = report.warnings;
  return j;
}

/// Full run: cascade per reference view (all views when fusion is on,
/// otherwise view 0 only), optional fusion, optional output directory with
/// config snapshot, per-stage depth PFMs, confidence maps, report JSON, and
/// the fused PLY.
inline RunReport run_pipeline(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();

  const std::vector<ViewData> views = load_views(cfg);
  const int n_views = static_cast<int>(views.size());

  const StageConfig stage0{cfg.stages[0].num_samples, cfg.stages[0].interval_scale,
                           cfg.depth_min, cfg.depth_max};
  RunReport report;
  report.stage2_interval = cfg.stages[2].interval_scale * base_interval(stage0);

  const bool fuse = cfg.fusion.enabled && n_views >= 2;
  const int n_refs = fuse ? n_views : 1;
  for (int r = 0; r < n_refs; ++r) report.views.push_back(run_cascade(cfg, views, r));

  PointCloud cloud;
  if (fuse) {
    std::vector<DepthMap> depths;
    std::vector<Array2D<double>> confidences;
    std::vector<CameraModel> cams;
    std::vector<Image> images;
    for (int r = 0; r < n_views; ++r) {
      depths.push_back(report.views[r].stages[2].depth);
      confidences.push_back(report.views[r].stages[2].confidence);
      cams.push_back(views[r].cam);
      images.push_back(views[r].image);
    }
    FilterOptions fopt;
    fopt.tau_pix = cfg.fusion.tau_pix;
    fopt.tau_rel = cfg.fusion.tau_rel;
    fopt.min_views = cfg.fusion.min_views;
    fopt.min_confidence = cfg.fusion.min_confidence;
    const auto masks = consistency_filter(depths, confidences, cams, fopt);
    cloud = fuse_point_cloud(depths, masks, cams, images, confidences,
                             cfg.fusion.voxel_size, &report.warnings);
    report.cloud_points = cloud.size();

    if (cfg.scene) {
      if (const auto* plane = std::get_if<PlaneSpec>(&cfg.scene->scene.primitive)) {
        double ss = 0.0;
        for (const auto& p : cloud.points) {
          const double d = plane->normal.dot(p.cast<double>() - plane->point);
          ss += d * d;
        }
        report.cloud_rms_plane =
            cloud.points.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(cloud.size()));
      }
    }
  }

  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!cfg.output_dir.empty()) {
    const fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("run: cannot create output directory " + cfg.output_dir);

    {
      std::ofstream out(dir / "config.json");
      out << std::setw(2) << config_to_json(cfg) << "\n";
      if (!out) throw DataError("run: cannot write config snapshot");
    }
    for (const ViewResult& v : report.views) {
      const std::string tag = "view" + std::to_string(v.reference);
      for (int g = 0; g < kNumStages; ++g)
        save_depth_pfm((dir / ("depth_stage" + std::to_string(g) + "_" + tag + ".pfm")).string(),
                       v.stages[g].depth);
      Array2D<float> conf(v.stages[2].confidence.rows(), v.stages[2].confidence.cols());
      for (int y = 0; y < conf.rows(); ++y)
        for (int x = 0; x < conf.cols(); ++x)
          conf(y, x) = static_cast<float>(v.stages[2].confidence(y, x));
      write_pfm((dir / ("confidence_" + tag + ".pfm")).string(), conf);
      if (cfg.save_png)
        write_png((dir / ("depth_" + tag + ".png")).string(),
                  depth_preview(v.stages[2].depth));
    }
    if (fuse) save_ply((dir / "cloud.ply").string(), cloud);
    {
      std::ofstream out(dir / "report.json");
      out << std::setw(2) << report_to_json(report) << "\n";
      if (!out) throw DataError("run: cannot write report");
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Ablation driver.

struct AblationRow {
  std::string label;
  double mae = 0.0;
  std::vector<double> within;
  double seconds = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::string table;
  nlohmann::json records;
};

/// Runs each config on the shared scene and tabulates reference-view
/// metrics. Configs must agree on the scene/input; each needs GT.
inline AblationResult run_ablation(const std::vector<PipelineConfig>& configs,
                                   const std::vector<std::string>& labels) {
  if (configs.size() < 2)
    throw ConfigError("ablate: need at least two configurations");
  if (labels.size() != configs.size())
    throw ConfigError("ablate: label/config count mismatch");
  for (size_t i = 1; i < configs.size(); ++i) {
    nlohmann::json a = config_to_json(configs[0]);
    nlohmann::json b = config_to_json(configs[i]);
    if (a.contains("scene") != b.contains("scene") ||
        (a.contains("scene") && a["scene"] != b["scene"]) ||
        (a.contains("input") && a["input"] != b["input"]) ||
        a["depth_min"] != b["depth_min"] || a["depth_max"] != b["depth_max"])
      throw ConfigError("ablate: configurations must share one scene");
  }

  AblationResult result;
  result.records = nlohmann::json::array();
  for (size_t i = 0; i < configs.size(); ++i) {
    PipelineConfig cfg = configs[i];
    cfg.fusion.enabled = false;  // reference-view metrics only
    const RunReport report = run_pipeline(cfg);
    if (!report.views[0].metrics)
      throw DataError("ablate: configuration '" + labels[i] + "' produced no GT metrics");
    AblationRow row;
    row.label = labels[i];
    row.mae = report.views[0].metrics->mae;
    row.within = report.views[0].metrics->within;
    row.seconds = report.seconds;
    result.rows.push_back(row);

    nlohmann::json rec;
    rec["label"] = labels[i];
    rec["mae"] = row.mae;
    rec["within"] = row.within;
    rec["seconds"] = row.seconds;
    result.records.push_back(rec);
  }

  std::ostringstream table;
  table << std::left << std::setw(18) << "variant" << std::right << std::setw(14)
        << "mae" << std::setw(14) << "within_1" << std::setw(14) << "within_2"
        << std::setw(12) << "seconds" << "\n";
  for (const AblationRow& row : result.rows) {
    table << std::left << std::setw(18) << row.label << std::right << std::fixed
          << std::setprecision(6) << std::setw(14) << row.mae;
    for (size_t t = 0; t < 2; ++t)
      table << std::setw(14)
            << (t < row.within.size() ? row.within[t] : std::nan(""));
    table << std::setprecision(2) << std::setw(12) << row.seconds << "\n";
    table.unsetf(std::ios::fixed);
  }
  result.table = table.str();
  return result;
}

}  // namespace geosweep
