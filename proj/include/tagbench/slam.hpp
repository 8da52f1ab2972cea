#pragma once

// Batch SLAM over a detection log: initialization by incremental planar
// PnP, then joint Levenberg-Marquardt over body poses, marker poses and
// (in the feature-aided mode) ground points.

#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "tagbench/factor_graph.hpp"
#include "tagbench/flightsim.hpp"
#include "tagbench/layout.hpp"

namespace tagbench {

struct OptimizeOptions {
  int max_iterations = 100;
  double lambda0 = 1e-4;     // initial LM damping
  double huber_delta = 2.0;  // px, per-factor robust threshold
  double tol = 1e-8;         // relative cost decrease for convergence
};

struct OptimizeResult {
  bool converged = false;
  int iterations = 0;  // accepted steps
  double final_cost = 0;
  std::vector<double> cost_history;  // initial cost, then after each accept
};

// Thrown after ten consecutive rejected steps; carries the state of the
// graph at the point of failure for post-mortem inspection.
struct OptimizeDivergenceError : DivergenceError {
  explicit OptimizeDivergenceError(std::string msg, FactorGraph snapshot_in)
      : DivergenceError(std::move(msg)),
        snapshot(std::make_shared<FactorGraph>(std::move(snapshot_in))) {}
  std::shared_ptr<FactorGraph> snapshot;
};

// Minimizes the robust reprojection cost in place. A factor whose predicted
// point falls behind the camera at the evaluation state is skipped for that
// evaluation. Cost history starts with the initial cost and appends one
// entry per accepted step.
OptimizeResult optimize(FactorGraph& graph, const OptimizeOptions& opts = {});

enum class SlamMode { MarkerOnly, MarkerPlusFeature };

struct SlamOptions {
  SlamMode mode = SlamMode::MarkerOnly;
  int stride = 1;              // keep frames with frame % stride == 0
  int min_feature_track = 8;   // frames a feature must span to be used
  double prior_rot_weight = 1e5;
  double prior_trans_weight = 1e5;
  OptimizeOptions optimize;
};

enum class FrameStatus { Estimated, NoMeasurement };

struct SlamResult {
  // Estimated frames only, ascending. Poses are T_slamworld_body; the slam
  // world frame is the first anchored marker's frame, so comparisons
  // against ground truth go through rigid alignment.
  std::vector<std::pair<int, Pose>> trajectory;
  std::map<int, Pose> marker_map;
  std::map<int, Vec3> feature_map;
  std::vector<FrameStatus> frame_status;  // one per log frame
  int n_estimated = 0;
  int n_total = 0;
  double availability = 0;  // n_estimated / n_total
  OptimizeResult opt;
  double frame_rate = 20.0;
  double t0 = 0;

  double frame_time(int frame) const { return t0 + frame / frame_rate; }
};

// The layout argument supplies marker side lengths only; marker poses are
// estimated from scratch. Throws Error when the log holds no usable marker
// detections, and propagates OptimizeDivergenceError from the backend.
SlamResult run_slam(const DetectionLog& log, const CameraRig& rig,
                    const MarkerLayout& layout, const SlamOptions& opts = {});

}  // namespace tagbench
