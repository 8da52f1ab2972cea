#pragma once

// Multi-trial experiment driver: per trial, simulate one flight and run
// both estimator modes against the same detection log, then score each
// against the simulated ground truth. Everything is a pure function of the
// configuration, so two runs with identical manifests produce identical
// metric bytes.

#include <string>
#include <vector>

#include "tagbench/io.hpp"

namespace tagbench {

struct ExperimentConfig {
  LayoutKind layout_kind = LayoutKind::NonNested;
  double base_side = 1.0;
  int trials = 3;
  uint64_t seed = 7;
  FlightProfile profile;
  VisibilityConditions visibility;
  SimOptions sim;
  int stride = 1;
  int min_feature_track = 8;
  double rpe_window = 1.0;  // seconds
};

struct ExperimentResult {
  std::vector<TrialMetrics> rows;  // trial-major, marker mode first
  std::string csv;
  std::string table;
  RunManifest manifest;  // trial 0 manifest (seed is the experiment seed)
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// Runs the experiment and writes layout.json, metrics.csv, table.txt and
// manifest.json into dir.
ExperimentResult run_experiment_to_dir(const ExperimentConfig& config,
                                       const std::string& dir);

}  // namespace tagbench
