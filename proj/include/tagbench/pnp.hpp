#pragma once

// Pose from planar marker correspondences.
//
// Pipeline: normalized DLT homography -> two pose candidates from the
// homography (the planar two-fold ambiguity) -> damped Gauss-Newton
// refinement of both -> pick the lower-cost candidate.
//
// Poses returned here map layout-frame points into the camera frame:
//   p_cam = T * p_layout.

#include <array>
#include <vector>

#include "tagbench/flightsim.hpp"
#include "tagbench/geometry.hpp"
#include "tagbench/layout.hpp"

namespace tagbench {

struct Correspondence {
  Vec3 world;   // layout-frame point; DLT uses (x, y), refinement all three
  Vec2 pixel;
};

// Hartley-normalized DLT from >= 4 correspondences. World points are taken
// from the z = 0 plane (their z component is ignored). The result maps
// (x, y, 1) to homogeneous pixels and is scaled to unit Frobenius norm.
// Throws DegenerateConfigError when the homography is not uniquely
// determined (too few points, collinear or coincident configurations).
Mat3 homography_dlt(const std::vector<Correspondence>& corrs);

// Decomposes H = K [r1 r2 t] into the two planar pose candidates. The first
// comes from column orthonormalization of K^-1 H (nearest rotation by SVD),
// the second mirrors the plane tilt about the viewing direction of the
// marker center. Both place the marker at positive depth. Distortion is
// ignored here; callers undistort pixels before the DLT.
std::array<Pose, 2> pose_from_homography(const Mat3& H, const CameraModel& cam);

struct PnPResult {
  Pose pose;              // camera-from-layout
  double rms_px = 0;      // per-axis reprojection rms over 2n residuals
  int iterations = 0;     // accepted Gauss-Newton steps
};

// Gauss-Newton with step-halving line search on the full distortion model.
// Stops when the step norm drops below 1e-10 or after 50 iterations; five
// consecutive failed line searches raise DivergenceError. The initial pose
// must put every point at positive depth (BehindCameraError otherwise).
PnPResult refine_pose(const Pose& initial,
                      const std::vector<Correspondence>& corrs,
                      const CameraModel& cam);

// DLT + decomposition + refinement of both candidates, lower final cost
// wins; ties go to the candidate with more points at positive depth.
PnPResult solve_planar_pnp(const std::vector<Correspondence>& corrs,
                           const CameraModel& cam);

// Joint pose from every marker detected in one frame by one camera, using
// the layout's marker geometry. All detections must share frame and camera.
// Unknown marker ids raise Error.
PnPResult multi_marker_pnp(const std::vector<Detection>& detections,
                           const MarkerLayout& layout, const CameraModel& cam);

}  // namespace tagbench
