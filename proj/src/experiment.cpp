#include "tagbench/experiment.hpp"

#include <filesystem>

#include "tagbench/hash.hpp"

namespace tagbench {

namespace fs = std::filesystem;

namespace {

TrialMetrics score(const SlamResult& slam, const Trajectory& gt,
                   double rpe_window) {
  TrialMetrics m;
  Trajectory est;
  est.reserve(slam.trajectory.size());
  for (const auto& [frame, pose] : slam.trajectory) {
    est.push_back({slam.frame_time(frame), pose});
  }
  m.ate = ate_rmse(est, gt);
  m.rpe = rpe_rmse(est, gt, rpe_window);
  m.avail = slam.availability;
  m.n_estimated = slam.n_estimated;
  m.n_total = slam.n_total;
  m.final_cost = slam.opt.final_cost;
  m.converged = slam.opt.converged;
  m.solved = true;
  return m;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.trials <= 0) throw Error("experiment: trials must be > 0");
  config.profile.validate();
  config.visibility.validate();

  const MarkerLayout layout =
      config.layout_kind == LayoutKind::Nested
          ? generate_nested(config.base_side, 0)
          : generate_non_nested(config.base_side, 0);
  const CameraRig rig = CameraRig::default_rig();
  const Trajectory gt = generate_flight_profile(config.profile);

  ExperimentResult out;
  for (int trial = 0; trial < config.trials; ++trial) {
    const uint64_t trial_seed = mix_seed(config.seed, trial);
    const DetectionLog log = simulate_observations(
        gt, layout, rig, config.visibility, trial_seed, config.sim);

    for (const SlamMode mode :
         {SlamMode::MarkerOnly, SlamMode::MarkerPlusFeature}) {
      TrialMetrics m;
      m.trial = trial;
      m.seed = trial_seed;
      m.mode = mode == SlamMode::MarkerOnly ? "marker" : "marker+feature";
      SlamOptions opts;
      opts.mode = mode;
      opts.stride = config.stride;
      opts.min_feature_track = config.min_feature_track;
      try {
        const SlamResult slam = run_slam(log, rig, layout, opts);
        TrialMetrics scored = score(slam, gt, config.rpe_window);
        m.solved = scored.solved;
        m.ate = scored.ate;
        m.rpe = scored.rpe;
        m.avail = scored.avail;
        m.n_estimated = scored.n_estimated;
        m.n_total = scored.n_total;
        m.final_cost = scored.final_cost;
        m.converged = scored.converged;
      } catch (const Error&) {
        // No solution for this condition: keep the row, dash the metrics.
        m.solved = false;
        m.n_total = log.total_frames;
      }
      out.rows.push_back(m);
    }
  }

  out.csv = metrics_csv(out.rows);
  out.table = metrics_table(out.rows);

  RunManifest manifest;
  manifest.seed = config.seed;
  manifest.layout_kind =
      config.layout_kind == LayoutKind::Nested ? "nested" : "non_nested";
  manifest.base_side = config.base_side;
  manifest.profile = config.profile;
  manifest.visibility = config.visibility;
  manifest.sim = config.sim;
  manifest.mode = "marker";  // experiments always run both modes
  manifest.stride = config.stride;
  manifest.min_feature_track = config.min_feature_track;
  out.manifest = manifest;
  return out;
}

ExperimentResult run_experiment_to_dir(const ExperimentConfig& config,
                                       const std::string& dir) {
  fs::create_directories(dir);
  ExperimentResult result = run_experiment(config);

  const MarkerLayout layout =
      config.layout_kind == LayoutKind::Nested
          ? generate_nested(config.base_side, 0)
          : generate_non_nested(config.base_side, 0);
  const std::string layout_path = (fs::path(dir) / "layout.json").string();
  save_layout(layout, layout_path);
  result.manifest.input_hashes["layout.json"] =
      sha256_file_hex(layout_path);

  write_file((fs::path(dir) / "metrics.csv").string(), result.csv);
  write_file((fs::path(dir) / "table.txt").string(), result.table);
  save_manifest(result.manifest, (fs::path(dir) / "manifest.json").string());
  return result;
}

}  // namespace tagbench
