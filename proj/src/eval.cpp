#include "tagbench/eval.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace tagbench {

namespace {

double default_tol(const Trajectory& gt) {
  if (gt.size() < 2) return 1e-9;
  std::vector<double> dts;
  dts.reserve(gt.size() - 1);
  for (size_t i = 1; i < gt.size(); ++i) dts.push_back(gt[i].t - gt[i - 1].t);
  std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
  return 0.5 * dts[dts.size() / 2];
}

}  // namespace

std::vector<std::pair<size_t, size_t>> match_by_time(const Trajectory& est,
                                                     const Trajectory& gt,
                                                     double tol) {
  if (tol < 0) tol = default_tol(gt);
  std::vector<std::pair<size_t, size_t>> matches;
  size_t j = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    while (j + 1 < gt.size() &&
           std::abs(gt[j + 1].t - est[i].t) <= std::abs(gt[j].t - est[i].t)) {
      ++j;
    }
    if (j < gt.size() && std::abs(gt[j].t - est[i].t) <= tol) {
      matches.emplace_back(i, j);
      ++j;
      if (j >= gt.size()) break;
    }
  }
  return matches;
}

Pose rigid_align(const Trajectory& est, const Trajectory& gt) {
  const auto matches = match_by_time(est, gt);
  if (matches.size() < 3) {
    throw DegenerateConfigError("rigid_align: fewer than 3 matched samples");
  }

  Vec3 ce = Vec3::Zero(), cg = Vec3::Zero();
  for (const auto& [i, j] : matches) {
    ce += est[i].pose.translation();
    cg += gt[j].pose.translation();
  }
  ce /= static_cast<double>(matches.size());
  cg /= static_cast<double>(matches.size());

  Mat3 H = Mat3::Zero();
  for (const auto& [i, j] : matches) {
    H += (est[i].pose.translation() - ce) *
         (gt[j].pose.translation() - cg).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(1) <= 1e-9 * std::max(sv(0), 1e-30)) {
    throw DegenerateConfigError("rigid_align: matched positions collinear");
  }
  Mat3 D = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) {
    D(2, 2) = -1;
  }
  const Mat3 R = svd.matrixV() * D * svd.matrixU().transpose();
  return Pose(R, cg - R * ce);
}

double ate_rmse(const Trajectory& est, const Trajectory& gt, bool align) {
  const auto matches = match_by_time(est, gt);
  if (matches.empty()) throw Error("ate_rmse: no matched samples");
  const Pose T = align ? rigid_align(est, gt) : Pose::Identity();
  double ss = 0;
  for (const auto& [i, j] : matches) {
    ss += (gt[j].pose.translation() - T * est[i].pose.translation())
              .squaredNorm();
  }
  return std::sqrt(ss / matches.size());
}

double availability(int n_estimated, int n_total) {
  if (n_total <= 0) throw Error("availability: n_total must be > 0");
  if (n_estimated < 0 || n_estimated > n_total) {
    throw Error("availability: n_estimated outside [0, n_total]");
  }
  return static_cast<double>(n_estimated) / n_total;
}

double rpe_rmse(const Trajectory& est, const Trajectory& gt, double window) {
  if (window <= 0) throw Error("rpe_rmse: window must be > 0");
  const auto matches = match_by_time(est, gt);
  if (matches.size() < 2) throw Error("rpe_rmse: too few matched samples");
  const double tol = default_tol(gt);

  double ss = 0;
  size_t n = 0;
  size_t k = 0;
  for (size_t a = 0; a < matches.size(); ++a) {
    const double target = est[matches[a].first].t + window;
    if (k <= a) k = a + 1;
    while (k < matches.size() && est[matches[k].first].t < target - tol) ++k;
    if (k >= matches.size()) break;
    if (std::abs(est[matches[k].first].t - target) > tol) continue;

    const auto& [ei, gi] = matches[a];
    const auto& [ej, gj] = matches[k];
    // Displacement expressed in the local frame of the earlier pose: the
    // result is invariant to any rigid remapping of the whole trajectory.
    const Vec3 de = est[ei].pose.rotation().conjugate() *
                    (est[ej].pose.translation() - est[ei].pose.translation());
    const Vec3 dg = gt[gi].pose.rotation().conjugate() *
                    (gt[gj].pose.translation() - gt[gi].pose.translation());
    ss += (de - dg).squaredNorm();
    ++n;
  }
  if (n == 0) throw Error("rpe_rmse: no sample pairs span the window");
  return std::sqrt(ss / n);
}

}  // namespace tagbench
