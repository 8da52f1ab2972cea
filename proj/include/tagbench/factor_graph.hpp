#pragma once

// Batch factor graph over body poses, marker poses and ground feature
// points, tied together by reprojection factors.
//
// States:
//  * body_states[frame]   : T_world_body
//  * marker_states[id]    : T_world_marker (sides come from marker_sides)
//  * feature_states[id]   : ground point in the world frame
// Pose increments are right (local) perturbations, T * exp(dx), so the
// estimate is equivariant under a change of the free world gauge. One pose
// prior pins that gauge.

#include <array>
#include <map>
#include <vector>

#include "tagbench/geometry.hpp"

namespace tagbench {

struct MarkerReprojectionFactor {
  int frame = 0;
  int camera = 0;
  int marker_id = 0;
  std::array<Vec2, 4> observed;  // TL, TR, BR, BL
};

struct FeatureReprojectionFactor {
  int frame = 0;
  int camera = 0;
  int feature_id = 0;
  Vec2 observed = Vec2::Zero();
};

// Gauge anchor: weighted se(3) deviation from a fixed pose. Not
// robustified.
struct PosePriorFactor {
  int frame = 0;
  Pose prior;
  double rot_weight = 1e5;
  double trans_weight = 1e5;
};

struct FactorGraph {
  CameraRig rig;
  std::map<int, Pose> body_states;
  std::map<int, Pose> marker_states;
  std::map<int, double> marker_sides;
  std::map<int, Vec3> feature_states;

  std::vector<MarkerReprojectionFactor> marker_factors;
  std::vector<FeatureReprojectionFactor> feature_factors;
  std::vector<PosePriorFactor> priors;

  // Every factor must reference existing states and cameras; every marker
  // state needs a side; at least one prior on an existing body state.
  void validate() const;
};

// Stacked corner residuals, predicted minus observed, for one marker
// observation: (u_TL - û_TL, v_TL - v̂_TL, ..., v_BL - v̂_BL).
// If any predicted corner falls at or behind the camera plane the factor is
// invalid: *valid is set false and the residual is zero. With valid ==
// nullptr a BehindCameraError is thrown instead.
Eigen::Matrix<double, 8, 1> marker_reprojection_residual(
    const CameraModel& cam, const Pose& body, const Pose& marker, double side,
    const std::array<Vec2, 4>& observed, bool* valid = nullptr);

// Residual plus analytic Jacobians with respect to right perturbations of
// the body and marker poses. Returns false (without throwing) when the
// factor is invalid.
bool marker_reprojection_jacobians(const CameraModel& cam, const Pose& body,
                                   const Pose& marker, double side,
                                   const std::array<Vec2, 4>& observed,
                                   Eigen::Matrix<double, 8, 1>& residual,
                                   Eigen::Matrix<double, 8, 6>& J_body,
                                   Eigen::Matrix<double, 8, 6>& J_marker);

Vec2 feature_reprojection_residual(const CameraModel& cam, const Pose& body,
                                   const Vec3& feature, const Vec2& observed,
                                   bool* valid = nullptr);

bool feature_reprojection_jacobians(const CameraModel& cam, const Pose& body,
                                    const Vec3& feature, const Vec2& observed,
                                    Vec2& residual,
                                    Eigen::Matrix<double, 2, 6>& J_body,
                                    Eigen::Matrix<double, 2, 3>& J_feature);

// Weighted [rot; trans] deviation of body from the prior, and its Jacobian.
Eigen::Matrix<double, 6, 1> pose_prior_residual(const PosePriorFactor& prior,
                                                const Pose& body);
void pose_prior_jacobian(const PosePriorFactor& prior, const Pose& body,
                         Eigen::Matrix<double, 6, 1>& residual,
                         Eigen::Matrix<double, 6, 6>& J_body);

}  // namespace tagbench
