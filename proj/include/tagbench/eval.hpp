#pragma once

// Trajectory accuracy and availability metrics.
//
// Estimates live in an arbitrary world gauge, so ATE first solves the rigid
// (no scale) alignment between matched positions; RPE compares relative
// displacements expressed in the earlier pose's frame and is gauge
// invariant by construction.

#include <utility>
#include <vector>

#include "tagbench/flightsim.hpp"
#include "tagbench/geometry.hpp"

namespace tagbench {

// Pairs of indices (est, gt) with |t_est - t_gt| <= tol. With tol < 0 the
// tolerance defaults to half the median ground-truth sample spacing. Each
// ground-truth sample matches at most once.
std::vector<std::pair<size_t, size_t>> match_by_time(const Trajectory& est,
                                                     const Trajectory& gt,
                                                     double tol = -1);

// Least-squares rigid transform T with gt_i ~ T * est_i over matched
// positions. Throws DegenerateConfigError for fewer than 3 matches or a
// collinear point set (rotation about the line would be unconstrained).
Pose rigid_align(const Trajectory& est, const Trajectory& gt);

// Root-mean-square translational error after alignment (or raw, with
// align = false).
double ate_rmse(const Trajectory& est, const Trajectory& gt,
                bool align = true);

// Fraction of frames with an estimate. Exact ratio of the two counts.
double availability(int n_estimated, int n_total);

// RMS error of relative displacements over a time window, both expressed
// in the frame of the window's first pose.
double rpe_rmse(const Trajectory& est, const Trajectory& gt, double window);

}  // namespace tagbench
