#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "tagbench/flightsim.hpp"
#include "tagbench/pnp.hpp"

using namespace tagbench;

namespace {

constexpr double kPi = 3.14159265358979323846;

CameraModel test_camera() {
  return CameraModel::with_default_intrinsics(2448, 2048, Pose());
}

// Projects z = 0 layout points through T_cam_layout and returns the
// correspondence list for the given camera.
std::vector<Correspondence> project_plane(const std::vector<Vec3>& pts,
                                          const Pose& T_cam_layout,
                                          const CameraModel& cam) {
  std::vector<Correspondence> corrs;
  for (const auto& p : pts) {
    corrs.push_back({p, project(cam, T_cam_layout * p).pixel});
  }
  return corrs;
}

std::vector<Vec3> square_points(double side) {
  const auto c = marker_corners_local(side);
  return {c[0], c[1], c[2], c[3]};
}

Pose nadir_view(double z) {
  // Camera looking straight down the layout +z axis from height z:
  // p_cam = R (p - (0,0,z)) with R = diag(1,-1,-1).
  const Quat R(0, 1, 0, 0);  // w, x, y, z: 180 deg about x
  return Pose(R, R * Vec3(0, 0, -z));
}

Pose tilted_view(double z, double tilt_deg) {
  const Pose tilt(Quat(Eigen::AngleAxisd(tilt_deg * kPi / 180.0, Vec3::UnitX())),
                  Vec3::Zero());
  return nadir_view(z) * tilt.inverse();
}

double pose_error_m(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm();
}

double pose_error_rad(const Pose& a, const Pose& b) {
  return rotation_distance(a, b);
}

}  // namespace

TEST_CASE("homography from a fronto-parallel square") {
  const CameraModel cam = test_camera();
  const Pose T = nadir_view(5.0);
  const auto corrs = project_plane(square_points(1.0), T, cam);
  const Mat3 H = homography_dlt(corrs);

  // H reproduces the correspondences: H (x, y, 1) ~ (u, v, 1).
  for (const auto& c : corrs) {
    const Vec3 h = H * Vec3(c.world.x(), c.world.y(), 1.0);
    CHECK(h.z() != doctest::Approx(0.0));
    CHECK(h.x() / h.z() == doctest::Approx(c.pixel.x()).epsilon(1e-9));
    CHECK(h.y() / h.z() == doctest::Approx(c.pixel.y()).epsilon(1e-9));
  }

  // And matches K [r1 r2 t] up to scale.
  Mat3 K = Mat3::Zero();
  K(0, 0) = cam.fx;
  K(1, 1) = cam.fy;
  K(0, 2) = cam.cx;
  K(1, 2) = cam.cy;
  K(2, 2) = 1;
  Mat3 M;
  M.col(0) = T.rotation().toRotationMatrix().col(0);
  M.col(1) = T.rotation().toRotationMatrix().col(1);
  M.col(2) = T.translation();
  Mat3 expected = K * M;
  expected /= expected.norm();
  const double sign = (expected(2, 2) * H(2, 2) < 0) ? -1.0 : 1.0;
  CHECK((H - sign * expected).norm() < 1e-9);
}

TEST_CASE("homography rejects degenerate inputs") {
  const CameraModel cam = test_camera();
  const Pose T = nadir_view(5.0);

  // Too few points.
  auto three = project_plane(
      {Vec3(-0.5, -0.5, 0), Vec3(0.5, -0.5, 0), Vec3(0.5, 0.5, 0)}, T, cam);
  CHECK_THROWS_AS(homography_dlt(three), DegenerateConfigError);

  // Four collinear points.
  auto line = project_plane({Vec3(-0.5, 0, 0), Vec3(-0.2, 0, 0),
                             Vec3(0.2, 0, 0), Vec3(0.5, 0, 0)},
                            T, cam);
  CHECK_THROWS_AS(homography_dlt(line), DegenerateConfigError);

  // Coincident points.
  auto dup = project_plane({Vec3(-0.5, -0.5, 0), Vec3(-0.5, -0.5, 0),
                            Vec3(-0.5, -0.5, 0), Vec3(-0.5, -0.5, 0)},
                           T, cam);
  CHECK_THROWS_AS(homography_dlt(dup), DegenerateConfigError);
}

TEST_CASE("pose candidates from the homography") {
  const CameraModel cam = test_camera();

  SUBCASE("tilted plane: one candidate matches the true pose") {
    const Pose T = tilted_view(5.0, 25.0);
    const auto corrs = project_plane(square_points(1.0), T, cam);
    const auto cands = pose_from_homography(homography_dlt(corrs), cam);

    const double e0 = pose_error_m(cands[0], T) + pose_error_rad(cands[0], T);
    const double e1 = pose_error_m(cands[1], T) + pose_error_rad(cands[1], T);
    CHECK(std::min(e0, e1) < 1e-6);
    // The other candidate is the mirrored tilt, clearly distinct.
    CHECK(std::max(e0, e1) > 0.1);
    // Both candidates keep the marker center in front of the camera.
    for (const auto& cand : cands) {
      CHECK((cand * Vec3::Zero()).z() > 0);
    }
  }

  SUBCASE("fronto-parallel: the two candidates coincide") {
    const Pose T = nadir_view(5.0);
    const auto corrs = project_plane(square_points(1.0), T, cam);
    const auto cands = pose_from_homography(homography_dlt(corrs), cam);
    CHECK(pose_error_m(cands[0], cands[1]) < 1e-6);
    CHECK(pose_error_rad(cands[0], cands[1]) < 1e-6);
    CHECK(pose_error_m(cands[0], T) < 1e-6);
    CHECK((cands[0].translation() - Vec3(0, 0, 5)).norm() < 1e-6);
  }
}

TEST_CASE("refinement accepts an exact initialization immediately") {
  const CameraModel cam = test_camera();
  const Pose T = tilted_view(4.0, 15.0);
  const auto corrs = project_plane(square_points(1.0), T, cam);

  const PnPResult r = refine_pose(T, corrs, cam);
  CHECK(r.rms_px < 1e-9);
  CHECK(r.iterations <= 1);
  CHECK(pose_error_m(r.pose, T) < 1e-10);
}

TEST_CASE("refinement pulls a perturbed pose back to the truth") {
  const CameraModel cam = test_camera();
  const Pose T = tilted_view(5.0, 20.0);
  const auto corrs = project_plane(square_points(1.0), T, cam);

  const Pose off = T * se3_exp(Twist{Vec3(0.05, -0.03, 0.04),
                                     Vec3(0.08, 0.05, -0.1)});
  const PnPResult r = refine_pose(off, corrs, cam);
  CHECK(r.rms_px < 1e-8);
  CHECK(pose_error_m(r.pose, T) < 1e-8);
  CHECK(pose_error_rad(r.pose, T) < 1e-8);
}

TEST_CASE("refinement error paths") {
  const CameraModel cam = test_camera();
  const Pose T = nadir_view(5.0);
  const auto corrs = project_plane(square_points(1.0), T, cam);

  // Initialization with the marker behind the camera.
  const Pose behind(T.rotation(), Vec3(0, 0, -5));
  CHECK_THROWS_AS(refine_pose(behind, corrs, cam), BehindCameraError);

  // Fewer than three points cannot constrain a pose.
  std::vector<Correspondence> two(corrs.begin(), corrs.begin() + 2);
  CHECK_THROWS_AS(refine_pose(T, two, cam), Error);

  // A corrupted measurement poisons the normal equations; the solver must
  // give up instead of looping on garbage.
  auto poisoned = corrs;
  poisoned[1].pixel.x() = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(refine_pose(T, poisoned, cam), DivergenceError);

  // A repeated consistent point is rank deficient but not inconsistent:
  // the solver settles at the (non-unique) zero-residual pose.
  std::vector<Correspondence> dup(8, corrs[0]);
  const PnPResult r = refine_pose(T, dup, cam);
  CHECK(r.rms_px < 1e-9);
}

TEST_CASE("full solve over a sweep of poses") {
  const CameraModel cam = test_camera();
  Rng rng(314);
  int solved = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    // Random tilt up to ~40 deg, random yaw, center depth 3 to 12 m, with
    // the marker kept near the optical axis so corners stay on sensor.
    const double tilt = 0.7 * rng.uniform01();
    const double yaw = 2 * kPi * rng.uniform01();
    const double depth = 3.0 + 9.0 * rng.uniform01();
    const Pose perturb(
        Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
             Eigen::AngleAxisd(tilt, Vec3::UnitX())),
        Vec3(0.4 * (rng.uniform01() - 0.5), 0.4 * (rng.uniform01() - 0.5), 0));
    const Pose T = nadir_view(depth) * perturb;

    const auto corrs = project_plane(square_points(1.0), T, cam);
    const PnPResult r = solve_planar_pnp(corrs, cam);
    CHECK(r.rms_px < 1e-6);
    CHECK(pose_error_m(r.pose, T) < 1e-6);
    CHECK(pose_error_rad(r.pose, T) < 1e-6);
    solved += pose_error_m(r.pose, T) < 1e-6 ? 1 : 0;
  }
  CHECK(solved == 1000);
}

TEST_CASE("solve handles lens distortion end to end") {
  CameraModel cam = test_camera();
  cam.k1 = 0.06;
  cam.k2 = -0.004;
  const Pose T = tilted_view(6.0, 18.0);

  // Eight points: two nested squares give the DLT a little redundancy.
  auto pts = square_points(1.0);
  for (const auto& p : square_points(0.5)) pts.push_back(p);
  const auto corrs = project_plane(pts, T, cam);

  const PnPResult r = solve_planar_pnp(corrs, cam);
  CHECK(r.rms_px < 1e-7);
  CHECK(pose_error_m(r.pose, T) < 1e-7);
  CHECK(pose_error_rad(r.pose, T) < 1e-7);
}

TEST_CASE("noisy solve: residual rms reflects the injected noise") {
  const CameraModel cam = test_camera();
  Rng rng(99);
  const double sigma = 0.5;
  double total_rms = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    const Pose T = tilted_view(5.0, 10.0);
    auto pts = square_points(1.0);
    for (const auto& p : square_points(0.4)) pts.push_back(p);
    auto corrs = project_plane(pts, T, cam);
    for (auto& c : corrs) {
      c.pixel.x() += sigma * rng.gaussian();
      c.pixel.y() += sigma * rng.gaussian();
    }
    const PnPResult r = solve_planar_pnp(corrs, cam);
    total_rms += r.rms_px;
    CHECK(pose_error_m(r.pose, T) < 0.05);
  }
  // 8 points, 6 dof: E[rms] ~ sigma sqrt(10/16) ~ 0.79 sigma.
  const double mean_rms = total_rms / trials;
  CHECK(mean_rms > 0.25 * sigma);
  CHECK(mean_rms < 1.5 * sigma);
}

TEST_CASE("multi-marker solve uses the layout geometry") {
  const MarkerLayout layout = generate_non_nested(1.0, 0);
  const CameraRig rig = CameraRig::default_rig();
  const CameraModel& down = rig.cameras[0];

  // Body hovering 2.5 m over the pad sees the medium ring; collect the
  // simulator's own detections and solve from them.
  Trajectory traj;
  traj.push_back({0.0, Pose(Quat::Identity(), Vec3(0, 0, 2.5))});
  const auto log = simulate_observations(traj, layout, rig,
                                         VisibilityConditions{}, 1,
                                         SimOptions{0, -10, 50, -6, 6, Pose()});
  REQUIRE(log.detections.size() >= 2);  // several mediums in view

  const PnPResult r = multi_marker_pnp(log.detections, layout, down);
  const Pose T_cam_world = (traj[0].pose * down.extrinsic).inverse();
  CHECK(r.rms_px < 1e-6);
  CHECK(pose_error_m(r.pose, T_cam_world) < 1e-6);
  CHECK(pose_error_rad(r.pose, T_cam_world) < 1e-6);
}

TEST_CASE("multi-marker solve input validation") {
  const MarkerLayout layout = generate_non_nested(1.0, 0);
  const CameraModel cam = test_camera();

  CHECK_THROWS_AS(multi_marker_pnp({}, layout, cam), Error);

  Detection d;
  d.frame = 0;
  d.camera = 0;
  d.marker_id = 999;  // not in the layout
  for (int k = 0; k < 4; ++k) d.corners[k] = Vec2(100 + k, 100);
  CHECK_THROWS_AS(multi_marker_pnp({d}, layout, cam), Error);

  Detection a = d, b = d;
  a.marker_id = 0;
  b.marker_id = 1;
  b.frame = 1;  // mixed frames forbidden
  CHECK_THROWS_AS(multi_marker_pnp({a, b}, layout, cam), Error);
  b.frame = 0;
  b.camera = 1;  // mixed cameras forbidden
  CHECK_THROWS_AS(multi_marker_pnp({a, b}, layout, cam), Error);
}
