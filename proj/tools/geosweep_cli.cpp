// Command-line front end: run / ablate / synth / fuse / eval.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "geosweep/geosweep.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Overrides {
  std::optional<std::string> aggregation;
  std::optional<std::string> normal_source;
  std::optional<std::string> output_dir;
  std::optional<std::string> kernel_file;
  std::optional<uint64_t> seed;
  std::optional<int> window;
  std::optional<double> depth_min, depth_max;
  std::optional<double> noise_sigma;
  std::optional<bool> fusion;
  std::optional<bool> save_png;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--aggregation", ov.aggregation,
                  "gcp | standard-k3 | standard-depth5 | standard-depth7");
  cmd->add_option("--normal-source", ov.normal_source, "gt | from-depth | file");
  cmd->add_option("--output-dir", ov.output_dir, "run directory");
  cmd->add_option("--kernel-file", ov.kernel_file, "aggregation kernel weights");
  cmd->add_option("--seed", ov.seed, "texture/noise seed");
  cmd->add_option("--window", ov.window, "GCP spatial window k");
  cmd->add_option("--depth-min", ov.depth_min, "sweep range minimum");
  cmd->add_option("--depth-max", ov.depth_max, "sweep range maximum");
  cmd->add_option("--noise-sigma", ov.noise_sigma, "synthetic image noise sigma");
  cmd->add_flag("--fusion,!--no-fusion", ov.fusion, "toggle point-cloud fusion");
  cmd->add_flag("--save-png,!--no-save-png", ov.save_png, "toggle preview PNGs");
}

json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw geosweep::DataError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw geosweep::DataError("config: parse failure in " + path + ": " + e.what());
  }
  return j;
}

json apply_overrides(json j, const Overrides& ov) {
  if (ov.aggregation) j["aggregation"] = *ov.aggregation;
  if (ov.normal_source) j["normal_source"] = *ov.normal_source;
  if (ov.output_dir) j["output_dir"] = *ov.output_dir;
  if (ov.kernel_file) j["kernel_file"] = *ov.kernel_file;
  if (ov.seed) j["seed"] = *ov.seed;
  if (ov.window) j["gcp"]["window"] = *ov.window;
  if (ov.depth_min) j["depth_min"] = *ov.depth_min;
  if (ov.depth_max) j["depth_max"] = *ov.depth_max;
  if (ov.noise_sigma) {
    if (!j.contains("scene"))
      throw geosweep::ConfigError("--noise-sigma requires a synthetic scene config");
    j["scene"]["noise_sigma"] = *ov.noise_sigma;
  }
  if (ov.fusion) j["fusion"]["enabled"] = *ov.fusion;
  if (ov.save_png) j["save_png"] = *ov.save_png;
  return j;
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
  const geosweep::PipelineConfig cfg =
      geosweep::parse_config(apply_overrides(load_config_json(config_path), ov));
  const geosweep::RunReport report = geosweep::run_pipeline(cfg);

  std::cout << "views: " << report.views.size() << "\n";
  std::cout << "stage2 interval: " << report.stage2_interval << "\n";
  for (const auto& v : report.views) {
    std::cout << "view " << v.reference << ": " << std::fixed << std::setprecision(2)
              << v.seconds << " s";
    if (v.metrics)
      std::cout << ", mae " << std::setprecision(6) << v.metrics->mae << ", within 1/2 intervals "
                << std::setprecision(4) << v.metrics->within[0] << " / "
                << v.metrics->within[1];
    std::cout << "\n";
    std::cout.unsetf(std::ios::fixed);
  }
  if (report.cloud_points > 0) {
    std::cout << "cloud: " << report.cloud_points << " points";
    if (report.cloud_rms_plane >= 0.0)
      std::cout << ", plane RMS " << report.cloud_rms_plane;
    std::cout << "\n";
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (!cfg.output_dir.empty()) std::cout << "outputs in " << cfg.output_dir << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const Overrides& ov,
               std::vector<std::string> modes, std::vector<std::string> normal_sources,
               const std::string& out_dir) {
  const json base = apply_overrides(load_config_json(config_path), ov);
  if (!modes.empty() && !normal_sources.empty())
    throw geosweep::ConfigError("ablate: pick one axis, --modes or --normal-sources");
  if (modes.empty() && normal_sources.empty())
    modes = {"gcp", "standard-k3", "standard-depth5", "standard-depth7"};

  std::vector<geosweep::PipelineConfig> configs;
  std::vector<std::string> labels;
  const auto& axis = modes.empty() ? normal_sources : modes;
  for (const std::string& value : axis) {
    json j = base;
    j[modes.empty() ? "normal_source" : "aggregation"] = value;
    j["output_dir"] = "";
    configs.push_back(geosweep::parse_config(j));
    labels.push_back(value);
  }

  const geosweep::AblationResult result = geosweep::run_ablation(configs, labels);
  std::cout << result.table;
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw geosweep::DataError("ablate: cannot create " + out_dir);
    std::ofstream txt(fs::path(out_dir) / "ablation.txt");
    txt << result.table;
    std::ofstream js(fs::path(out_dir) / "ablation.json");
    js << std::setw(2) << result.records << "\n";
    if (!txt || !js) throw geosweep::DataError("ablate: cannot write results");
  }
  return 0;
}

int cmd_synth(const std::string& config_path, const Overrides& ov,
              const std::string& out_dir) {
  const geosweep::PipelineConfig cfg =
      geosweep::parse_config(apply_overrides(load_config_json(config_path), ov));
  if (!cfg.scene)
    throw geosweep::ConfigError("synth: config must contain a 'scene' block");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw geosweep::DataError("synth: cannot create " + out_dir);

  const std::vector<geosweep::ViewData> views = geosweep::load_views(cfg);
  json input;
  for (size_t i = 0; i < views.size(); ++i) {
    const std::string tag = "view" + std::to_string(i);
    const fs::path dir(out_dir);
    geosweep::save_image_pfm((dir / (tag + ".pfm")).string(), views[i].image);
    if (cfg.save_png) geosweep::write_png((dir / (tag + ".png")).string(), views[i].image);
    geosweep::save_camera((dir / (tag + "_cam.txt")).string(), views[i].cam);
    geosweep::save_depth_pfm((dir / (tag + "_gt_depth.pfm")).string(), views[i].gt_depth);
    geosweep::save_normal_map((dir / (tag + "_gt_normal.pfm")).string(),
                              views[i].gt_normal);
    input["images"].push_back((dir / (tag + ".pfm")).string());
    input["cameras"].push_back((dir / (tag + "_cam.txt")).string());
    input["gt_depths"].push_back((dir / (tag + "_gt_depth.pfm")).string());
  }

  // A ready-to-run config that consumes the exported files.
  json run_cfg = geosweep::config_to_json(cfg);
  run_cfg.erase("scene");
  run_cfg["input"] = input;
  run_cfg["output_dir"] = (fs::path(out_dir) / "run").string();
  std::ofstream out(fs::path(out_dir) / "run_config.json");
  out << std::setw(2) << run_cfg << "\n";
  if (!out) throw geosweep::DataError("synth: cannot write run_config.json");

  std::cout << "wrote " << views.size() << " views to " << out_dir << "\n";
  return 0;
}

int cmd_fuse(const std::vector<std::string>& depth_paths,
             const std::vector<std::string>& camera_paths,
             const std::vector<std::string>& confidence_paths,
             const std::vector<std::string>& image_paths, const std::string& output,
             const geosweep::FilterOptions& fopt, double voxel_size) {
  if (depth_paths.size() != camera_paths.size())
    throw geosweep::ConfigError("fuse: need one camera per depth map");
  if (!confidence_paths.empty() && confidence_paths.size() != depth_paths.size())
    throw geosweep::ConfigError("fuse: confidence count mismatch");
  if (!image_paths.empty() && image_paths.size() != depth_paths.size())
    throw geosweep::ConfigError("fuse: image count mismatch");

  std::vector<geosweep::DepthMap> depths;
  std::vector<geosweep::CameraModel> cams;
  std::vector<geosweep::Array2D<double>> confidences;
  std::vector<geosweep::Image> images;
  for (size_t i = 0; i < depth_paths.size(); ++i) {
    depths.push_back(geosweep::load_depth_pfm(depth_paths[i]));
    cams.push_back(geosweep::load_camera(camera_paths[i], depths.back().width(),
                                         depths.back().height()));
    if (!confidence_paths.empty()) {
      const auto c = geosweep::read_pfm(confidence_paths[i]);
      geosweep::Array2D<double> cd(c.rows(), c.cols());
      for (int y = 0; y < c.rows(); ++y)
        for (int x = 0; x < c.cols(); ++x) cd(y, x) = c(y, x);
      confidences.push_back(std::move(cd));
    }
    if (!image_paths.empty()) images.push_back(geosweep::load_image_pfm(image_paths[i]));
  }

  const auto masks = geosweep::consistency_filter(depths, confidences, cams, fopt);
  std::vector<std::string> warnings;
  const geosweep::PointCloud cloud = geosweep::fuse_point_cloud(
      depths, masks, cams, images, confidences, voxel_size, &warnings);
  geosweep::save_ply(output, cloud);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << cloud.size() << " points to " << output << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             std::vector<double> thresholds) {
  const geosweep::DepthMap pred = geosweep::load_depth_pfm(pred_path);
  const geosweep::DepthMap gt = geosweep::load_depth_pfm(gt_path);
  if (thresholds.empty()) thresholds = {0.01, 0.02, 0.05};
  const geosweep::DepthMetrics m = geosweep::depth_metrics(pred, gt, thresholds);
  json j;
  j["mae"] = m.mae;
  j["thresholds"] = m.thresholds;
  j["within"] = m.within;
  j["valid_fraction"] = m.valid_fraction;
  j["jointly_valid"] = m.jointly_valid;
  std::cout << std::setw(2) << j << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geosweep: plane-sweep MVS with geometrically consistent propagation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, output = "cloud.ply";
  std::string pred_path, gt_path;
  Overrides ov;
  std::vector<std::string> modes, normal_sources;
  std::vector<std::string> depth_paths, camera_paths, confidence_paths, image_paths;
  std::vector<double> thresholds;
  geosweep::FilterOptions fopt;
  double voxel_size = 0.0;

  CLI::App* run = app.add_subcommand("run", "execute the three-stage pipeline");
  run->add_option("--config", config_path, "pipeline config JSON")->required();
  add_override_flags(run, ov);

  CLI::App* ablate = app.add_subcommand("ablate", "compare aggregation or normal variants");
  ablate->add_option("--config", config_path, "pipeline config JSON")->required();
  ablate->add_option("--modes", modes, "aggregation modes to compare")->delimiter(',');
  ablate->add_option("--normal-sources", normal_sources, "normal sources to compare")
      ->delimiter(',');
  ablate->add_option("--results-dir", out_dir, "where to write ablation.{txt,json}");
  add_override_flags(ablate, ov);

  CLI::App* synth = app.add_subcommand("synth", "render a synthetic scene to disk");
  synth->add_option("--config", config_path, "pipeline config JSON with a scene")->required();
  synth->add_option("--out", out_dir, "output directory")->required();
  add_override_flags(synth, ov);

  CLI::App* fuse = app.add_subcommand("fuse", "filter and fuse depth maps into a PLY");
  fuse->add_option("--depths", depth_paths, "per-view depth PFMs")->required();
  fuse->add_option("--cameras", camera_paths, "per-view camera text files")->required();
  fuse->add_option("--confidences", confidence_paths, "per-view confidence PFMs");
  fuse->add_option("--images", image_paths, "per-view image PFMs for colors");
  fuse->add_option("--output", output, "output PLY path");
  fuse->add_option("--tau-pix", fopt.tau_pix, "max reprojection error (px)");
  fuse->add_option("--tau-rel", fopt.tau_rel, "max relative depth error");
  fuse->add_option("--min-views", fopt.min_views, "consistent views required");
  fuse->add_option("--min-confidence", fopt.min_confidence, "confidence floor");
  fuse->add_option("--voxel-size", voxel_size, "dedup voxel size (0 = off)");

  CLI::App* eval = app.add_subcommand("eval", "score a depth map against GT");
  eval->add_option("--pred", pred_path, "predicted depth PFM")->required();
  eval->add_option("--gt", gt_path, "ground-truth depth PFM")->required();
  eval->add_option("--thresholds", thresholds, "error thresholds")->delimiter(',');

  try {
    app.parse(argc, argv);
    if (run->parsed()) return cmd_run(config_path, ov);
    if (ablate->parsed()) return cmd_ablate(config_path, ov, modes, normal_sources, out_dir);
    if (synth->parsed()) return cmd_synth(config_path, ov, out_dir);
    if (fuse->parsed())
      return cmd_fuse(depth_paths, camera_paths, confidence_paths, image_paths, output,
                      fopt, voxel_size);
    if (eval->parsed()) return cmd_eval(pred_path, gt_path, thresholds);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints usage or help text
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
