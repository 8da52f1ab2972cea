#include "tagbench/pnp.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace tagbench {

namespace {

constexpr double kStepTol = 1e-10;
constexpr int kMaxIterations = 50;
constexpr int kMaxLineSearchHalvings = 20;
constexpr int kMaxFailedLineSearches = 5;

struct Normalization {
  Eigen::Matrix3d T = Eigen::Matrix3d::Identity();
};

// Translate the centroid to the origin, scale mean radius to sqrt(2).
Normalization normalize_points(const std::vector<Vec2>& pts) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_r = 0;
  for (const auto& p : pts) mean_r += (p - centroid).norm();
  mean_r /= static_cast<double>(pts.size());
  if (mean_r < 1e-12) {
    throw DegenerateConfigError("homography_dlt: coincident points");
  }
  const double s = std::sqrt(2.0) / mean_r;
  Normalization n;
  n.T << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return n;
}

double reprojection_cost(const Pose& T, const std::vector<Correspondence>& cs,
                         const CameraModel& cam) {
  double cost = 0;
  for (const auto& c : cs) {
    const Vec3 p = T * c.world;
    if (p.z() <= 0) return std::numeric_limits<double>::infinity();
    const Vec2 r = project(cam, p).pixel - c.pixel;
    cost += r.squaredNorm();
  }
  return cost;
}

int positive_depth_count(const Pose& T, const std::vector<Correspondence>& cs) {
  int n = 0;
  for (const auto& c : cs) {
    if ((T * c.world).z() > 0) ++n;
  }
  return n;
}

// Ideal (distortion-free) pixel coordinates for the DLT stage.
std::vector<Correspondence> undistorted(const std::vector<Correspondence>& cs,
                                        const CameraModel& cam) {
  if (cam.k1 == 0 && cam.k2 == 0) return cs;
  std::vector<Correspondence> out = cs;
  for (auto& c : out) {
    const Vec3 ray = unproject(cam, c.pixel, 1.0);
    c.pixel = Vec2(cam.cx + cam.fx * ray.x(), cam.cy + cam.fy * ray.y());
  }
  return out;
}

}  // namespace

Mat3 homography_dlt(const std::vector<Correspondence>& corrs) {
  if (corrs.size() < 4) {
    throw DegenerateConfigError("homography_dlt: needs at least 4 points");
  }
  std::vector<Vec2> wp, ip;
  wp.reserve(corrs.size());
  ip.reserve(corrs.size());
  for (const auto& c : corrs) {
    wp.emplace_back(c.world.x(), c.world.y());
    ip.push_back(c.pixel);
  }
  const Normalization nw = normalize_points(wp);
  const Normalization ni = normalize_points(ip);

  Eigen::MatrixXd A(2 * corrs.size(), 9);
  for (size_t i = 0; i < corrs.size(); ++i) {
    const Eigen::Vector3d w = nw.T * Eigen::Vector3d(wp[i].x(), wp[i].y(), 1);
    const Eigen::Vector3d u = ni.T * Eigen::Vector3d(ip[i].x(), ip[i].y(), 1);
    A.row(2 * i) << w.x(), w.y(), w.z(), 0, 0, 0, -u.x() * w.x(),
        -u.x() * w.y(), -u.x() * w.z();
    A.row(2 * i + 1) << 0, 0, 0, w.x(), w.y(), w.z(), -u.y() * w.x(),
        -u.y() * w.y(), -u.y() * w.z();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A unique solution needs rank 8: the second-smallest singular value must
  // be well away from zero.
  if (sv(7) < 1e-10 * sv(0)) {
    throw DegenerateConfigError("homography_dlt: degenerate configuration");
  }
  Eigen::Matrix3d Hn;
  const auto h = svd.matrixV().col(8);
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Mat3 H = ni.T.inverse() * Hn * nw.T;
  H /= H.norm();
  return H;
}

std::array<Pose, 2> pose_from_homography(const Mat3& H,
                                         const CameraModel& cam) {
  Mat3 K = Mat3::Identity();
  K(0, 0) = cam.fx;
  K(1, 1) = cam.fy;
  K(0, 2) = cam.cx;
  K(1, 2) = cam.cy;

  Mat3 M = K.inverse() * H;
  const double lambda = std::sqrt(M.col(0).norm() * M.col(1).norm());
  if (lambda < 1e-12) {
    throw DegenerateConfigError("pose_from_homography: singular homography");
  }
  M /= lambda;
  // The marker must sit in front of the camera: t_z > 0.
  if (M(2, 2) < 0) M = -M;

  Mat3 B;
  B.col(0) = M.col(0);
  B.col(1) = M.col(1);
  B.col(2) = M.col(0).cross(M.col(1));
  Eigen::JacobiSVD<Mat3> svd(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    R = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  const Vec3 t = M.col(2);

  // Second candidate: reflect the plane tilt in the frame whose z axis runs
  // through the marker center. Writing the rotation there as ZYZ Euler
  // angles, the ambiguous mate has the middle (tilt) angle negated.
  const double tn = t.norm();
  if (tn < 1e-12) {
    throw DegenerateConfigError("pose_from_homography: zero translation");
  }
  const Quat q_align = Quat::FromTwoVectors(t / tn, Vec3::UnitZ());
  const Mat3 Rc = q_align.toRotationMatrix() * R;
  const Vec3 zyz = Rc.eulerAngles(2, 1, 2);
  const Mat3 Rc_flipped =
      (Eigen::AngleAxisd(zyz(0), Vec3::UnitZ()) *
       Eigen::AngleAxisd(-zyz(1), Vec3::UnitY()) *
       Eigen::AngleAxisd(zyz(2), Vec3::UnitZ()))
          .toRotationMatrix();
  const Mat3 R2 = q_align.conjugate().toRotationMatrix() * Rc_flipped;

  return {Pose(R, t), Pose(R2, t)};
}

PnPResult refine_pose(const Pose& initial,
                      const std::vector<Correspondence>& corrs,
                      const CameraModel& cam) {
  if (corrs.size() < 3) {
    throw DegenerateConfigError("refine_pose: needs at least 3 points");
  }
  for (const auto& c : corrs) {
    if ((initial * c.world).z() <= 0) {
      throw BehindCameraError("refine_pose: initial pose has negative depth");
    }
  }

  Pose T = initial;
  double cost = reprojection_cost(T, corrs, cam);
  int iterations = 0;
  int failed_searches = 0;

  while (iterations < kMaxIterations) {
    Eigen::Matrix<double, 6, 6> JtJ = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> Jtr = Eigen::Matrix<double, 6, 1>::Zero();
    const Mat3 R = T.rotation_matrix();
    for (const auto& c : corrs) {
      const Vec3 p = T * c.world;
      const Vec2 r = project(cam, p).pixel - c.pixel;
      const auto Jp = project_jacobian(cam, p);
      // Right perturbation T * exp(d): dp = R (dt - [X]x dw).
      Eigen::Matrix<double, 3, 6> Dp;
      Dp.leftCols<3>() = -R * skew(c.world);
      Dp.rightCols<3>() = R;
      const Eigen::Matrix<double, 2, 6> J = Jp * Dp;
      JtJ += J.transpose() * J;
      Jtr += J.transpose() * r;
    }

    Eigen::Matrix<double, 6, 1> delta =
        JtJ.ldlt().solve(-Jtr);
    if (!delta.allFinite()) {
      if (++failed_searches >= kMaxFailedLineSearches) {
        throw DivergenceError("refine_pose: normal equations unsolvable");
      }
      continue;
    }
    if (delta.norm() < kStepTol) break;

    double alpha = 1.0;
    bool improved = false;
    double min_trial = std::numeric_limits<double>::infinity();
    for (int h = 0; h < kMaxLineSearchHalvings; ++h) {
      const Twist xi(alpha * delta.head<3>(), alpha * delta.tail<3>());
      const Pose trial = T * se3_exp(xi);
      const double trial_cost = reprojection_cost(trial, corrs, cam);
      if (trial_cost < cost) {
        T = trial;
        cost = trial_cost;
        improved = true;
        break;
      }
      min_trial = std::min(min_trial, trial_cost);
      alpha *= 0.5;
    }
    if (!improved) {
      // No strict decrease, but the shortest step lands within rounding
      // error of the current cost: that is the noise floor of a noisy
      // minimum, not divergence.
      if (min_trial - cost <= 1e-12 * std::max(cost, 1.0)) break;
      if (++failed_searches >= kMaxFailedLineSearches) {
        throw DivergenceError("refine_pose: line search failed repeatedly");
      }
      continue;
    }
    failed_searches = 0;
    ++iterations;
    if (alpha * delta.norm() < kStepTol) break;
  }

  PnPResult out;
  out.pose = T;
  out.rms_px = std::sqrt(cost / (2.0 * corrs.size()));
  out.iterations = iterations;
  return out;
}

PnPResult solve_planar_pnp(const std::vector<Correspondence>& corrs,
                           const CameraModel& cam) {
  const auto ideal = undistorted(corrs, cam);
  const Mat3 H = homography_dlt(ideal);
  const auto candidates = pose_from_homography(H, cam);

  PnPResult best;
  double best_cost = std::numeric_limits<double>::infinity();
  int best_depths = -1;
  bool any = false;
  for (const auto& cand : candidates) {
    PnPResult r;
    try {
      r = refine_pose(cand, corrs, cam);
    } catch (const Error&) {
      continue;
    }
    const double c = r.rms_px;
    const int depths = positive_depth_count(r.pose, corrs);
    const bool better =
        !any || c < best_cost - 1e-12 ||
        (std::abs(c - best_cost) <= 1e-12 && depths > best_depths);
    if (better) {
      best = r;
      best_cost = c;
      best_depths = depths;
      any = true;
    }
  }
  if (!any) {
    throw DivergenceError("solve_planar_pnp: both candidates failed to refine");
  }
  if (best_depths < static_cast<int>(corrs.size())) {
    throw DivergenceError("solve_planar_pnp: refined pose has negative depth");
  }
  return best;
}

PnPResult multi_marker_pnp(const std::vector<Detection>& detections,
                           const MarkerLayout& layout, const CameraModel& cam) {
  if (detections.empty()) {
    throw DegenerateConfigError("multi_marker_pnp: no detections");
  }
  const int frame = detections.front().frame;
  const int camera = detections.front().camera;
  std::vector<Correspondence> corrs;
  corrs.reserve(4 * detections.size());
  for (const auto& d : detections) {
    if (d.frame != frame || d.camera != camera) {
      throw Error("multi_marker_pnp: detections span frames or cameras");
    }
    const auto world = marker_corners_world(layout, d.marker_id);
    for (int k = 0; k < 4; ++k) {
      corrs.push_back({world[k], d.corners[k]});
    }
  }
  return solve_planar_pnp(corrs, cam);
}

}  // namespace tagbench
