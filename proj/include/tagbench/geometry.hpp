#pragma once

// Rigid transforms, se(3) exp/log and the pinhole camera model used by the
// rest of the library.
//
// Conventions, fixed once and relied on everywhere:
//  * Quaternions are Hamilton (w, x, y, z), kept unit-norm.
//  * A Pose maps points from its own (local) frame into the parent frame:
//      p_parent = R * p_local + t.
//  * World frame: ENU, z up, origin at the landing pad center, x along the
//    travel direction. Body frame: FLU (x forward, y left, z up).
//  * Camera frame: z along the optical axis (forward), x right, y down.
//    CameraModel::extrinsic is the camera pose expressed in the body frame.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "tagbench/error.hpp"

namespace tagbench {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

Mat3 skew(const Vec3& v);

// Left Jacobian of SO(3) and its inverse; series fallback near zero.
Mat3 so3_left_jacobian(const Vec3& rot);
Mat3 so3_left_jacobian_inverse(const Vec3& rot);

Mat3 so3_exp(const Vec3& rot);
// Throws DegenerateAngleError within 1e-9 of angle pi (axis sign ambiguous).
Vec3 so3_log(const Mat3& R);
Vec3 so3_log(const Quat& q);

// Element of se(3): rotation part is an axis-angle vector in radians,
// translation part in meters. exp() uses the left Jacobian coupling.
struct Twist {
  Vec3 rot = Vec3::Zero();
  Vec3 trans = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& r, const Vec3& t) : rot(r), trans(t) {}

  Twist scaled(double s) const { return Twist(rot * s, trans * s); }
};

class Pose {
 public:
  Pose() : q_(Quat::Identity()), t_(Vec3::Zero()) {}
  Pose(const Quat& q, const Vec3& t) : q_(unit(q)), t_(t) {}
  Pose(const Mat3& R, const Vec3& t) : q_(unit(Quat(R))), t_(t) {}

  static Pose Identity() { return Pose(); }

  const Quat& rotation() const { return q_; }
  const Vec3& translation() const { return t_; }
  Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }

  // p_parent = R * p_local + t
  Vec3 operator*(const Vec3& p) const { return q_ * p + t_; }

  // Composition of maps: (a * b) first applies b, then a.
  Pose operator*(const Pose& other) const {
    return Pose(q_ * other.q_, q_ * other.t_ + t_);
  }

  Pose inverse() const {
    Quat qi = q_.conjugate();
    return Pose(qi, -(qi * t_));
  }

  bool isApprox(const Pose& other, double tol = 1e-12) const;

 private:
  // Normalization is skipped when the norm is already unit to the last few
  // ulps, so deserialized poses keep their exact stored coefficients.
  static Quat unit(const Quat& q) {
    const double n2 = q.squaredNorm();
    if (n2 < 0.25) throw Error("Pose: quaternion too far from unit length");
    if (std::abs(n2 - 1.0) < 1e-12) return q;
    return q.normalized();
  }

  Quat q_;
  Vec3 t_;
};

Pose se3_exp(const Twist& xi);
// Throws DegenerateAngleError at rotation angle pi.
Twist se3_log(const Pose& T);

// Angle of the relative rotation between two poses, in radians.
double rotation_angle(const Quat& q);
double rotation_distance(const Pose& a, const Pose& b);

// Pinhole camera with two-term radial distortion (k1, k2).
struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  double k1 = 0, k2 = 0;
  Pose extrinsic;  // camera frame expressed in the body frame

  CameraModel() = default;
  CameraModel(double fx_, double fy_, double cx_, double cy_, int w, int h,
              double k1_ = 0, double k2_ = 0, const Pose& ext = Pose());

  // fx = fy = width / (2 tan(30 deg)), i.e. a 60 degree horizontal field of
  // view, principal point at the image center, no distortion.
  static CameraModel with_default_intrinsics(int w, int h,
                                             const Pose& ext = Pose());
};

struct Projection {
  Vec2 pixel = Vec2::Zero();
  bool in_image = false;
};

// Projects a point given in the camera frame. Throws BehindCameraError if
// the depth is not strictly positive.
Projection project(const CameraModel& cam, const Vec3& p_cam);

// Same, but returns nullopt instead of throwing on non-positive depth.
std::optional<Projection> try_project(const CameraModel& cam, const Vec3& p_cam);

// Inverse of project at a given depth (z in the camera frame). Iteratively
// undoes the radial distortion.
Vec3 unproject(const CameraModel& cam, const Vec2& pixel, double depth);

// d(pixel) / d(p_cam), the 2x3 Jacobian of project at p_cam.
Eigen::Matrix<double, 2, 3> project_jacobian(const CameraModel& cam,
                                             const Vec3& p_cam);

// Rigidly mounted camera set. The down-facing primary is camera 0.
struct CameraRig {
  std::vector<CameraModel> cameras;

  CameraRig() = default;
  explicit CameraRig(std::vector<CameraModel> cams);

  // Two cameras: 2448x2048 facing straight down, and 4096x3000 pitched 45
  // degrees forward of straight down. Default intrinsics, zero mount offsets.
  static CameraRig default_rig();
};

}  // namespace tagbench
