#include "tagbench/factor_graph.hpp"

#include <string>

#include "tagbench/layout.hpp"

namespace tagbench {

void FactorGraph::validate() const {
  if (rig.cameras.empty()) throw Error("graph: empty camera rig");
  auto check_camera = [&](int c) {
    if (c < 0 || c >= static_cast<int>(rig.cameras.size())) {
      throw Error("graph: factor references camera " + std::to_string(c));
    }
  };
  for (const auto& f : marker_factors) {
    check_camera(f.camera);
    if (!body_states.count(f.frame)) {
      throw Error("graph: marker factor on missing frame " +
                  std::to_string(f.frame));
    }
    if (!marker_states.count(f.marker_id)) {
      throw Error("graph: factor on missing marker " +
                  std::to_string(f.marker_id));
    }
  }
  for (const auto& [id, pose] : marker_states) {
    (void)pose;
    auto it = marker_sides.find(id);
    if (it == marker_sides.end() || it->second <= 0) {
      throw Error("graph: marker " + std::to_string(id) + " has no side");
    }
  }
  for (const auto& f : feature_factors) {
    check_camera(f.camera);
    if (!body_states.count(f.frame)) {
      throw Error("graph: feature factor on missing frame " +
                  std::to_string(f.frame));
    }
    if (!feature_states.count(f.feature_id)) {
      throw Error("graph: factor on missing feature " +
                  std::to_string(f.feature_id));
    }
  }
  if (priors.empty()) throw Error("graph: needs a gauge prior");
  for (const auto& p : priors) {
    if (!body_states.count(p.frame)) {
      throw Error("graph: prior on missing frame " + std::to_string(p.frame));
    }
    if (p.rot_weight <= 0 || p.trans_weight <= 0) {
      throw Error("graph: prior weights must be positive");
    }
  }
}

Eigen::Matrix<double, 8, 1> marker_reprojection_residual(
    const CameraModel& cam, const Pose& body, const Pose& marker, double side,
    const std::array<Vec2, 4>& observed, bool* valid) {
  Eigen::Matrix<double, 8, 1> r = Eigen::Matrix<double, 8, 1>::Zero();
  const Pose T_cam_world = (body * cam.extrinsic).inverse();
  const auto local = marker_corners_local(side);
  if (valid) *valid = true;
  for (int k = 0; k < 4; ++k) {
    const Vec3 p_cam = T_cam_world * (marker * local[k]);
    if (p_cam.z() <= 0) {
      if (!valid) {
        throw BehindCameraError("marker residual: corner behind camera");
      }
      *valid = false;
      return Eigen::Matrix<double, 8, 1>::Zero();
    }
    r.segment<2>(2 * k) = project(cam, p_cam).pixel - observed[k];
  }
  return r;
}

bool marker_reprojection_jacobians(const CameraModel& cam, const Pose& body,
                                   const Pose& marker, double side,
                                   const std::array<Vec2, 4>& observed,
                                   Eigen::Matrix<double, 8, 1>& residual,
                                   Eigen::Matrix<double, 8, 6>& J_body,
                                   Eigen::Matrix<double, 8, 6>& J_marker) {
  const Pose T_world_cam = body * cam.extrinsic;
  const Pose T_cam_world = T_world_cam.inverse();
  const Mat3 R_ext_t = cam.extrinsic.rotation_matrix().transpose();
  const Mat3 R_cam_world = T_cam_world.rotation_matrix();
  const Mat3 R_marker = marker.rotation_matrix();
  const Pose T_body_world = body.inverse();
  const auto local = marker_corners_local(side);

  residual.setZero();
  J_body.setZero();
  J_marker.setZero();
  for (int k = 0; k < 4; ++k) {
    const Vec3 p_world = marker * local[k];
    const Vec3 p_body = T_body_world * p_world;
    const Vec3 p_cam = T_cam_world * p_world;
    if (p_cam.z() <= 0) return false;
    residual.segment<2>(2 * k) = project(cam, p_cam).pixel - observed[k];
    const auto Jp = project_jacobian(cam, p_cam);

    // Body right perturbation B * exp(d):
    //   p_cam = E^-1 exp(-d) p_body, so dp_cam = R_E^T ([p_body]x dw - dt).
    Eigen::Matrix<double, 3, 6> Db;
    Db.leftCols<3>() = R_ext_t * skew(p_body);
    Db.rightCols<3>() = -R_ext_t;
    J_body.block<2, 6>(2 * k, 0) = Jp * Db;

    // Marker right perturbation M * exp(d):
    //   dp_cam = R_cam_world R_M (-[X]x dw + dt).
    Eigen::Matrix<double, 3, 6> Dm;
    Dm.leftCols<3>() = -R_cam_world * R_marker * skew(local[k]);
    Dm.rightCols<3>() = R_cam_world * R_marker;
    J_marker.block<2, 6>(2 * k, 0) = Jp * Dm;
  }
  return true;
}

Vec2 feature_reprojection_residual(const CameraModel& cam, const Pose& body,
                                   const Vec3& feature, const Vec2& observed,
                                   bool* valid) {
  const Pose T_cam_world = (body * cam.extrinsic).inverse();
  const Vec3 p_cam = T_cam_world * feature;
  if (valid) *valid = true;
  if (p_cam.z() <= 0) {
    if (!valid) {
      throw BehindCameraError("feature residual: point behind camera");
    }
    *valid = false;
    return Vec2::Zero();
  }
  return project(cam, p_cam).pixel - observed;
}

bool feature_reprojection_jacobians(const CameraModel& cam, const Pose& body,
                                    const Vec3& feature, const Vec2& observed,
                                    Vec2& residual,
                                    Eigen::Matrix<double, 2, 6>& J_body,
                                    Eigen::Matrix<double, 2, 3>& J_feature) {
  const Pose T_cam_world = (body * cam.extrinsic).inverse();
  const Vec3 p_cam = T_cam_world * feature;
  if (p_cam.z() <= 0) return false;
  residual = project(cam, p_cam).pixel - observed;
  const auto Jp = project_jacobian(cam, p_cam);
  const Mat3 R_ext_t = cam.extrinsic.rotation_matrix().transpose();
  const Vec3 p_body = body.inverse() * feature;

  Eigen::Matrix<double, 3, 6> Db;
  Db.leftCols<3>() = R_ext_t * skew(p_body);
  Db.rightCols<3>() = -R_ext_t;
  J_body = Jp * Db;
  J_feature = Jp * T_cam_world.rotation_matrix();
  return true;
}

Eigen::Matrix<double, 6, 1> pose_prior_residual(const PosePriorFactor& prior,
                                                const Pose& body) {
  const Quat dq = prior.prior.rotation().conjugate() * body.rotation();
  Eigen::Matrix<double, 6, 1> r;
  r.head<3>() = prior.rot_weight * so3_log(dq);
  r.tail<3>() =
      prior.trans_weight * (body.translation() - prior.prior.translation());
  return r;
}

void pose_prior_jacobian(const PosePriorFactor& prior, const Pose& body,
                         Eigen::Matrix<double, 6, 1>& residual,
                         Eigen::Matrix<double, 6, 6>& J_body) {
  residual = pose_prior_residual(prior, body);
  // d log(Rp^T R exp(dw))/dw is the inverse right Jacobian of so(3) at the
  // current deviation; J_r^-1(phi) = J_l^-1(-phi).
  const Vec3 phi = residual.head<3>() / prior.rot_weight;
  J_body.setZero();
  J_body.topLeftCorner<3, 3>() =
      prior.rot_weight * so3_left_jacobian_inverse(-phi);
  // t' = t + R dt under the right perturbation.
  J_body.bottomRightCorner<3, 3>() =
      prior.trans_weight * body.rotation_matrix();
}

}  // namespace tagbench
