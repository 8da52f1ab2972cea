// Command line front end: layout generation, flight simulation, slam,
// evaluation, batch experiments and plotting.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "tagbench/experiment.hpp"
#include "tagbench/hash.hpp"
#include "tagbench/io.hpp"
#include "tagbench/plot.hpp"

namespace fs = std::filesystem;
using namespace tagbench;

namespace {

LayoutKind parse_kind(const std::string& s) {
  if (s == "nested") return LayoutKind::Nested;
  if (s == "non-nested" || s == "non_nested") return LayoutKind::NonNested;
  throw Error("unknown layout kind '" + s + "' (nested | non-nested)");
}

SlamMode parse_mode(const std::string& s) {
  if (s == "marker") return SlamMode::MarkerOnly;
  if (s == "marker+feature") return SlamMode::MarkerPlusFeature;
  throw Error("unknown mode '" + s + "' (marker | marker+feature)");
}

struct SimulateArgs {
  std::string layout_path;
  std::string out_dir;
  uint64_t seed = 1;
  FlightProfile profile;
  VisibilityConditions vis;
  SimOptions sim;
};

void add_profile_options(CLI::App* cmd, FlightProfile& p) {
  cmd->add_option("--hover-alt", p.hover_alt, "Traverse altitude [m]");
  cmd->add_option("--traverse", p.traverse_dist, "One-way leg length [m]");
  cmd->add_option("--speed", p.speed, "Traverse speed [m/s]");
  cmd->add_option("--climb-rate", p.climb_rate, "Climb/descent rate [m/s]");
  cmd->add_option("--pause", p.pause, "Hold time at the far end [s]");
  cmd->add_option("--frame-rate", p.frame_rate, "Sample rate [Hz]");
  cmd->add_flag("--fixed-yaw", p.fixed_yaw,
                "Hold yaw at zero instead of facing travel");
}

void add_visibility_options(CLI::App* cmd, VisibilityConditions& v) {
  cmd->add_option("--illumination", v.illumination, "Scene illumination [Lux]");
  cmd->add_option("--sigma", v.pixel_noise_sigma, "Corner noise sigma [px]");
  cmd->add_option("--dropout", v.dropout_prob, "Detection dropout probability");
  cmd->add_option("--min-illumination", v.min_illumination,
                  "Detection illumination floor [Lux]");
  cmd->add_option("--range-min", v.range_min_ratio,
                  "Min detection range [marker sides]");
  cmd->add_option("--range-max", v.range_max_ratio,
                  "Max detection range [marker sides]");
  cmd->add_option("--max-incidence", v.max_incidence_deg,
                  "Max incidence angle [deg]");
}

int cmd_layout(const std::string& kind, double base_side, int seed_id,
               const std::vector<int>& partition, const std::string& out) {
  MarkerLayout layout;
  if (parse_kind(kind) == LayoutKind::Nested) {
    layout = generate_nested(base_side, seed_id);
  } else {
    ScalePartition part;
    if (!partition.empty()) {
      if (partition.size() != 3) {
        throw Error("--partition needs exactly three counts");
      }
      part.small = partition[0];
      part.medium = partition[1];
      part.large = partition[2];
    }
    layout = generate_non_nested(base_side, seed_id, part);
  }
  save_layout(layout, out);
  std::printf("wrote %s (%zu markers)\n", out.c_str(),
              layout.markers.size());
  return 0;
}

int cmd_simulate(const SimulateArgs& a) {
  const MarkerLayout layout = load_layout(a.layout_path);
  const CameraRig rig = CameraRig::default_rig();
  const Trajectory gt = generate_flight_profile(a.profile);
  const DetectionLog log =
      simulate_observations(gt, layout, rig, a.vis, a.seed, a.sim);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  save_trajectory(gt, (dir / "gt.csv").string());
  save_detection_log(log, a.out_dir);
  // Keep a byte-identical copy of the layout next to the log so the run
  // directory is self-contained.
  const std::string layout_copy = (dir / "layout.json").string();
  write_file(layout_copy, read_file(a.layout_path));

  RunManifest manifest;
  manifest.seed = a.seed;
  manifest.layout_kind =
      layout.kind == LayoutKind::Nested ? "nested" : "non_nested";
  manifest.base_side = layout.base_side;
  manifest.profile = a.profile;
  manifest.visibility = a.vis;
  manifest.sim = a.sim;
  for (const char* name :
       {"layout.json", "gt.csv", "detections.csv", "features.csv",
        "log.json"}) {
    manifest.input_hashes[name] = sha256_file_hex((dir / name).string());
  }
  save_manifest(manifest, (dir / "manifest.json").string());

  std::printf("frames %d, detections %zu, feature observations %zu\n",
              log.total_frames, log.detections.size(), log.features.size());
  std::printf("manifest %s\n", manifest_hash(manifest).c_str());
  return 0;
}

int cmd_slam(const std::string& log_path, const std::string& layout_path,
             const std::string& mode, int stride, int min_track,
             const std::string& manifest_path, const std::string& out_dir) {
  if (!manifest_path.empty()) {
    const RunManifest m = load_manifest(manifest_path);
    verify_manifest_inputs(m, manifest_path);
  }
  const DetectionLog log = load_detection_log(log_path);
  const MarkerLayout layout = load_layout(layout_path);
  const CameraRig rig = CameraRig::default_rig();
  if (log.rig_hash != rig_content_hash(rig)) {
    throw HashMismatchError("log was recorded with a different camera rig");
  }

  SlamOptions opts;
  opts.mode = parse_mode(mode);
  opts.stride = stride;
  opts.min_feature_track = min_track;
  const SlamResult result = run_slam(log, rig, layout, opts);
  save_slam_result(result, out_dir);
  std::printf(
      "estimated %d/%d frames (availability %.3f), final cost %.6g, %s\n",
      result.n_estimated, result.n_total, result.availability,
      result.opt.final_cost,
      result.opt.converged ? "converged" : "not converged");
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path,
             const std::string& result_path, double window, bool no_align) {
  const Trajectory est = load_trajectory(est_path);
  const Trajectory gt = load_trajectory(gt_path);
  std::printf("ATE-RMSE [m]: %.3f\n", ate_rmse(est, gt, !no_align));
  std::printf("RPE-RMSE [m]: %.3f (window %.2f s)\n",
              rpe_rmse(est, gt, window), window);
  if (!result_path.empty()) {
    const std::string bytes = read_file(result_path);
    const auto j = nlohmann::json::parse(bytes);
    const int n_est = j.at("n_estimated").get<int>();
    const int n_total = j.at("n_total").get<int>();
    std::printf("Availability: %.3f (%d/%d)\n", availability(n_est, n_total),
                n_est, n_total);
  }
  return 0;
}

int cmd_experiment(const ExperimentConfig& config, const std::string& dir) {
  const ExperimentResult result = run_experiment_to_dir(config, dir);
  std::fputs(result.table.c_str(), stdout);
  std::printf("wrote %s\n", (fs::path(dir) / "metrics.csv").string().c_str());
  return 0;
}

int cmd_plot(const std::string& est_path, const std::string& gt_path,
             const std::string& out) {
  const Trajectory est = load_trajectory(est_path);
  const Trajectory gt = load_trajectory(gt_path);
  write_file(out, render_trajectory_svg(est, gt));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale fiducial SLAM benchmark"};
  app.require_subcommand(1);

  // layout
  auto* layout_cmd = app.add_subcommand("layout", "Generate a marker layout");
  std::string kind = "non-nested", layout_out;
  double base_side = 1.0;
  int seed_id = 0;
  std::vector<int> partition;
  layout_cmd->add_option("--kind", kind, "nested | non-nested");
  layout_cmd->add_option("--base-side", base_side, "Largest marker side [m]");
  layout_cmd->add_option("--seed-id", seed_id, "First marker id");
  layout_cmd->add_option("--partition", partition,
                         "small,medium,large counts (non-nested)")
      ->delimiter(',');
  layout_cmd->add_option("--out", layout_out, "Output layout.json")
      ->required();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a flight");
  SimulateArgs sim_args;
  sim_cmd->add_option("--layout", sim_args.layout_path, "layout.json")
      ->required();
  sim_cmd->add_option("--out-dir", sim_args.out_dir, "Run directory")
      ->required();
  sim_cmd->add_option("--seed", sim_args.seed, "RNG seed");
  sim_cmd->add_option("--features", sim_args.sim.feature_count,
                      "Ground feature count");
  add_profile_options(sim_cmd, sim_args.profile);
  add_visibility_options(sim_cmd, sim_args.vis);

  // slam
  auto* slam_cmd = app.add_subcommand("slam", "Estimate a trajectory");
  std::string slam_log, slam_layout, slam_mode = "marker", slam_manifest,
              slam_out;
  int stride = 1, min_track = 8;
  slam_cmd->add_option("--log", slam_log, "log.json from simulate")
      ->required();
  slam_cmd->add_option("--layout", slam_layout, "layout.json (marker sizes)")
      ->required();
  slam_cmd->add_option("--mode", slam_mode, "marker | marker+feature");
  slam_cmd->add_option("--stride", stride, "Keep every n-th frame");
  slam_cmd->add_option("--min-feature-track", min_track,
                       "Min frames per feature track");
  slam_cmd->add_option("--manifest", slam_manifest,
                       "Verify input hashes against this manifest first");
  slam_cmd->add_option("--out-dir", slam_out, "Output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score an estimate");
  std::string eval_est, eval_gt, eval_result;
  double window = 1.0;
  bool no_align = false;
  eval_cmd->add_option("--est", eval_est, "estimate.csv")->required();
  eval_cmd->add_option("--gt", eval_gt, "ground truth csv")->required();
  eval_cmd->add_option("--result", eval_result,
                       "result.json for availability");
  eval_cmd->add_option("--window", window, "RPE window [s]");
  eval_cmd->add_flag("--no-align", no_align, "Skip rigid alignment");

  // experiment
  auto* exp_cmd =
      app.add_subcommand("experiment", "Multi-trial benchmark run");
  ExperimentConfig config;
  std::string exp_kind = "non-nested", exp_dir = "experiment_out";
  exp_cmd->add_option("--layout", exp_kind, "nested | non-nested");
  exp_cmd->add_option("--base-side", config.base_side,
                      "Largest marker side [m]");
  exp_cmd->add_option("--trials", config.trials, "Trial count");
  exp_cmd->add_option("--seed", config.seed, "Experiment seed");
  exp_cmd->add_option("--stride", config.stride, "Keep every n-th frame");
  exp_cmd->add_option("--min-feature-track", config.min_feature_track,
                      "Min frames per feature track");
  exp_cmd->add_option("--features", config.sim.feature_count,
                      "Ground feature count");
  exp_cmd->add_option("--out-dir", exp_dir, "Output directory");
  add_profile_options(exp_cmd, config.profile);
  add_visibility_options(exp_cmd, config.visibility);

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "Render trajectories to SVG");
  std::string plot_est, plot_gt, plot_out;
  plot_cmd->add_option("--est", plot_est, "estimate.csv")->required();
  plot_cmd->add_option("--gt", plot_gt, "ground truth csv")->required();
  plot_cmd->add_option("--out", plot_out, "Output .svg")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (layout_cmd->parsed()) {
      return cmd_layout(kind, base_side, seed_id, partition, layout_out);
    }
    if (sim_cmd->parsed()) return cmd_simulate(sim_args);
    if (slam_cmd->parsed()) {
      return cmd_slam(slam_log, slam_layout, slam_mode, stride, min_track,
                      slam_manifest, slam_out);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_est, eval_gt, eval_result, window, no_align);
    }
    if (exp_cmd->parsed()) {
      config.layout_kind = parse_kind(exp_kind);
      return cmd_experiment(config, exp_dir);
    }
    if (plot_cmd->parsed()) return cmd_plot(plot_est, plot_gt, plot_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
