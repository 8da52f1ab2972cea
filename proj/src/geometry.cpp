#include "tagbench/geometry.hpp"

#include <cmath>

namespace tagbench {

namespace {
constexpr double kSmallAngle = 1e-8;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

Mat3 so3_left_jacobian(const Vec3& rot) {
  const double theta = rot.norm();
  const Mat3 W = skew(rot);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 6.0) * W * W;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * W +
         ((theta - std::sin(theta)) / (t2 * theta)) * W * W;
}

Mat3 so3_left_jacobian_inverse(const Vec3& rot) {
  const double theta = rot.norm();
  const Mat3 W = skew(rot);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * W + (1.0 / 12.0) * W * W;
  }
  const double t2 = theta * theta;
  const double c = 1.0 / t2 -
                   (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * W + c * W * W;
}

Mat3 so3_exp(const Vec3& rot) {
  const double theta = rot.norm();
  const Mat3 W = skew(rot);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  return Mat3::Identity() + (std::sin(theta) / theta) * W +
         ((1.0 - std::cos(theta)) / (theta * theta)) * W * W;
}

Vec3 so3_log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  const double vn = q.vec().norm();
  const double angle = 2.0 * std::atan2(vn, q.w());
  if (angle > kPi - 1e-9) {
    throw DegenerateAngleError("so3_log: rotation angle at pi, axis ambiguous");
  }
  if (vn < kSmallAngle) {
    // angle/sin(angle/2) -> 2 + angle^2/12 + ...
    return q.vec() * (2.0 + angle * angle / 12.0);
  }
  return q.vec() * (angle / vn);
}

Vec3 so3_log(const Mat3& R) { return so3_log(Quat(R)); }

bool Pose::isApprox(const Pose& other, double tol) const {
  const double dq = std::min((q_.coeffs() - other.q_.coeffs()).norm(),
                             (q_.coeffs() + other.q_.coeffs()).norm());
  return dq <= tol && (t_ - other.t_).norm() <= tol;
}

Pose se3_exp(const Twist& xi) {
  const Mat3 R = so3_exp(xi.rot);
  const Vec3 t = so3_left_jacobian(xi.rot) * xi.trans;
  return Pose(R, t);
}

Twist se3_log(const Pose& T) {
  const Vec3 rot = so3_log(T.rotation());
  const Vec3 trans = so3_left_jacobian_inverse(rot) * T.translation();
  return Twist(rot, trans);
}

double rotation_angle(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  return 2.0 * std::atan2(q.vec().norm(), q.w());
}

double rotation_distance(const Pose& a, const Pose& b) {
  return rotation_angle(a.rotation().conjugate() * b.rotation());
}

CameraModel::CameraModel(double fx_, double fy_, double cx_, double cy_, int w,
                         int h, double k1_, double k2_, const Pose& ext)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h), k1(k1_),
      k2(k2_), extrinsic(ext) {
  if (fx <= 0 || fy <= 0) throw Error("CameraModel: focal length must be > 0");
  if (width <= 0 || height <= 0) {
    throw Error("CameraModel: image size must be positive");
  }
}

CameraModel CameraModel::with_default_intrinsics(int w, int h,
                                                 const Pose& ext) {
  const double f = w / (2.0 * std::tan(kPi / 6.0));
  return CameraModel(f, f, w / 2.0, h / 2.0, w, h, 0, 0, ext);
}

static double distortion_factor(const CameraModel& cam, double r2) {
  return 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2;
}

Projection project(const CameraModel& cam, const Vec3& p_cam) {
  if (p_cam.z() <= 0) {
    throw BehindCameraError("project: point at or behind the camera plane");
  }
  const double xn = p_cam.x() / p_cam.z();
  const double yn = p_cam.y() / p_cam.z();
  const double d = distortion_factor(cam, xn * xn + yn * yn);
  Projection out;
  out.pixel = Vec2(cam.cx + cam.fx * xn * d, cam.cy + cam.fy * yn * d);
  out.in_image = out.pixel.x() >= 0 && out.pixel.x() < cam.width &&
                 out.pixel.y() >= 0 && out.pixel.y() < cam.height;
  return out;
}

std::optional<Projection> try_project(const CameraModel& cam,
                                      const Vec3& p_cam) {
  if (p_cam.z() <= 0) return std::nullopt;
  return project(cam, p_cam);
}

Vec3 unproject(const CameraModel& cam, const Vec2& pixel, double depth) {
  if (depth <= 0) throw Error("unproject: depth must be > 0");
  const double xd = (pixel.x() - cam.cx) / cam.fx;
  const double yd = (pixel.y() - cam.cy) / cam.fy;
  // Fixed-point undistortion; exact when k1 = k2 = 0.
  double xn = xd, yn = yd;
  for (int i = 0; i < 20; ++i) {
    const double d = distortion_factor(cam, xn * xn + yn * yn);
    xn = xd / d;
    yn = yd / d;
  }
  return Vec3(xn * depth, yn * depth, depth);
}

Eigen::Matrix<double, 2, 3> project_jacobian(const CameraModel& cam,
                                             const Vec3& p_cam) {
  if (p_cam.z() <= 0) {
    throw BehindCameraError("project_jacobian: point behind the camera");
  }
  const double iz = 1.0 / p_cam.z();
  const double xn = p_cam.x() * iz;
  const double yn = p_cam.y() * iz;
  const double r2 = xn * xn + yn * yn;
  const double d = distortion_factor(cam, r2);
  const double dd = cam.k1 + 2.0 * cam.k2 * r2;  // d(d)/d(r2)

  // pixel = c + f * xn * d(r2); first wrt (xn, yn), then chain to p_cam.
  Eigen::Matrix2d A;
  A(0, 0) = cam.fx * (d + 2.0 * xn * xn * dd);
  A(0, 1) = cam.fx * 2.0 * xn * yn * dd;
  A(1, 0) = cam.fy * 2.0 * xn * yn * dd;
  A(1, 1) = cam.fy * (d + 2.0 * yn * yn * dd);

  Eigen::Matrix<double, 2, 3> N;
  N << iz, 0, -xn * iz, 0, iz, -yn * iz;
  return A * N;
}

CameraRig::CameraRig(std::vector<CameraModel> cams) : cameras(std::move(cams)) {
  if (cameras.empty()) throw Error("CameraRig: needs at least one camera");
}

CameraRig CameraRig::default_rig() {
  // Primary looks straight down: optical axis -z_body, image x along travel.
  Mat3 R_down;
  R_down << 1, 0, 0, 0, -1, 0, 0, 0, -1;

  // Secondary pitched 45 degrees forward of straight down; optical axis
  // (sin45, 0, -cos45) in the body frame, image x toward -y_body.
  const double s = std::sqrt(0.5);
  Mat3 R_fwd;
  R_fwd.col(0) = Vec3(0, -1, 0);    // camera x
  R_fwd.col(1) = Vec3(-s, 0, -s);   // camera y
  R_fwd.col(2) = Vec3(s, 0, -s);    // camera z (optical axis)

  std::vector<CameraModel> cams;
  cams.push_back(CameraModel::with_default_intrinsics(
      2448, 2048, Pose(R_down, Vec3::Zero())));
  cams.push_back(CameraModel::with_default_intrinsics(
      4096, 3000, Pose(R_fwd, Vec3::Zero())));
  return CameraRig(std::move(cams));
}

}  // namespace tagbench
