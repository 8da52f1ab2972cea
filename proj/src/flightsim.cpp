#include "tagbench/flightsim.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "tagbench/hash.hpp"

namespace tagbench {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void FlightProfile::validate() const {
  if (hover_alt <= 0 || traverse_dist <= 0 || speed <= 0 || climb_rate <= 0 ||
      frame_rate <= 0 || pause < 0) {
    throw Error("FlightProfile: parameters must be positive (pause >= 0)");
  }
}

double FlightProfile::total_time() const {
  return 2.0 * hover_alt / climb_rate + 2.0 * traverse_dist / speed + pause;
}

Pose flight_pose_at(const FlightProfile& p, double t) {
  p.validate();
  const double t_climb = p.hover_alt / p.climb_rate;
  const double t_leg = p.traverse_dist / p.speed;
  const double t1 = t_climb;                // end of ascent
  const double t2 = t1 + t_leg;             // end of outbound leg
  const double t3 = t2 + p.pause;           // end of pause
  const double t4 = t3 + t_leg;             // end of return leg
  const double t5 = t4 + t_climb;           // touchdown

  if (t < 0 || t > t5 + 1e-9) throw Error("flight_pose_at: t outside profile");

  Vec3 pos;
  double yaw;
  if (t <= t1) {
    pos = Vec3(0, 0, p.climb_rate * t);
    yaw = 0;
  } else if (t <= t2) {
    pos = Vec3(p.speed * (t - t1), 0, p.hover_alt);
    yaw = 0;
  } else if (t <= t3) {
    pos = Vec3(p.traverse_dist, 0, p.hover_alt);
    yaw = p.pause > 0 ? kPi * (t - t2) / p.pause : kPi;
  } else if (t <= t4) {
    pos = Vec3(p.traverse_dist - p.speed * (t - t3), 0, p.hover_alt);
    yaw = kPi;
  } else {
    pos = Vec3(0, 0, p.hover_alt - p.climb_rate * std::min(t - t4, t_climb));
    yaw = kPi;
  }
  if (p.fixed_yaw) yaw = 0;
  return Pose(Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())), pos);
}

Trajectory generate_flight_profile(const FlightProfile& profile) {
  profile.validate();
  const double total = profile.total_time();
  const int n = static_cast<int>(std::floor(total * profile.frame_rate + 1e-9));
  Trajectory traj;
  traj.reserve(n + 1);
  for (int k = 0; k <= n; ++k) {
    const double t = k / profile.frame_rate;
    traj.push_back({t, flight_pose_at(profile, std::min(t, total))});
  }
  return traj;
}

void VisibilityConditions::validate() const {
  if (illumination < 0 || min_illumination < 0) {
    throw Error("VisibilityConditions: illumination must be >= 0");
  }
  if (pixel_noise_sigma < 0) {
    throw Error("VisibilityConditions: pixel_noise_sigma must be >= 0");
  }
  if (dropout_prob < 0 || dropout_prob > 1) {
    throw Error("VisibilityConditions: dropout_prob outside [0, 1]");
  }
  if (range_min_ratio <= 0 || range_max_ratio <= range_min_ratio) {
    throw Error("VisibilityConditions: need 0 < range_min < range_max");
  }
  if (max_incidence_deg <= 0 || max_incidence_deg > 90) {
    throw Error("VisibilityConditions: max_incidence_deg outside (0, 90]");
  }
}

int DetectionLog::frames_with_detections() const {
  std::set<int> frames;
  for (const auto& d : detections) frames.insert(d.frame);
  return static_cast<int>(frames.size());
}

double Rng::uniform01() {
  // 53 random mantissa bits, as in the canonical 64-bit-to-double recipe.
  return (gen_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform01();
  while (u1 <= 0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * kPi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * kPi * u2);
}

bool marker_visible(const MarkerSpec& marker, const Pose& layout_pose,
                    const CameraModel& cam, const Pose& body_pose,
                    const VisibilityConditions& cond) {
  const Pose T_world_cam = body_pose * cam.extrinsic;
  const Pose T_cam_world = T_world_cam.inverse();
  const Pose T_world_marker = layout_pose * marker.pose;

  // Range gate: Euclidean camera-to-center distance in units of the side.
  const Vec3 center_w = T_world_marker.translation();
  const double range = (center_w - T_world_cam.translation()).norm();
  if (range < cond.range_min_ratio * marker.side ||
      range > cond.range_max_ratio * marker.side) {
    return false;
  }

  // Incidence gate: angle between the marker normal and the ray back to the
  // camera. Also rejects views from behind the printed face.
  const Vec3 normal_w = T_world_marker.rotation() * Vec3::UnitZ();
  const Vec3 to_cam = T_world_cam.translation() - center_w;
  if (to_cam.norm() < 1e-12) return false;
  const double cos_inc = normal_w.dot(to_cam.normalized());
  if (cos_inc < std::cos(cond.max_incidence_deg * kPi / 180.0)) return false;

  // All four corners must project strictly inside the image.
  for (const auto& corner_local : marker_corners_local(marker.side)) {
    const Vec3 p_cam = T_cam_world * (T_world_marker * corner_local);
    const auto proj = try_project(cam, p_cam);
    if (!proj || !proj->in_image) return false;
  }
  return true;
}

std::vector<Vec3> generate_feature_field(const SimOptions& opt,
                                         uint64_t seed) {
  if (opt.feature_count < 0) throw Error("SimOptions: negative feature_count");
  Rng rng(mix_seed(seed, 0x6665617475726573ULL));  // distinct feature stream
  std::vector<Vec3> pts;
  pts.reserve(opt.feature_count);
  for (int i = 0; i < opt.feature_count; ++i) {
    const double x =
        opt.runway_x_min + (opt.runway_x_max - opt.runway_x_min) * rng.uniform01();
    const double y =
        opt.runway_y_min + (opt.runway_y_max - opt.runway_y_min) * rng.uniform01();
    pts.emplace_back(x, y, 0.0);
  }
  return pts;
}

std::string rig_content_hash(const CameraRig& rig) {
  std::ostringstream ss;
  for (const auto& c : rig.cameras) {
    ss << format_double(c.fx) << ',' << format_double(c.fy) << ','
       << format_double(c.cx) << ',' << format_double(c.cy) << ',' << c.width
       << ',' << c.height << ',' << format_double(c.k1) << ','
       << format_double(c.k2);
    const Quat& q = c.extrinsic.rotation();
    const Vec3& t = c.extrinsic.translation();
    ss << ',' << format_double(q.w()) << ',' << format_double(q.x()) << ','
       << format_double(q.y()) << ',' << format_double(q.z()) << ','
       << format_double(t.x()) << ',' << format_double(t.y()) << ','
       << format_double(t.z()) << ';';
  }
  return sha256_hex(ss.str());
}

DetectionLog simulate_observations(const Trajectory& traj,
                                   const MarkerLayout& layout,
                                   const CameraRig& rig,
                                   const VisibilityConditions& cond,
                                   uint64_t seed, const SimOptions& opt) {
  if (traj.empty()) throw Error("simulate_observations: empty trajectory");
  cond.validate();
  validate_layout(layout);
  if (rig.cameras.empty()) throw Error("simulate_observations: empty rig");

  DetectionLog log;
  log.rig_hash = rig_content_hash(rig);
  log.total_frames = static_cast<int>(traj.size());
  log.t0 = traj.front().t;
  log.frame_rate = traj.size() > 1
                       ? 1.0 / (traj[1].t - traj[0].t)
                       : 20.0;

  const bool lit = cond.illumination >= cond.min_illumination;
  const auto features = generate_feature_field(opt, seed);
  const double cos_max_inc = std::cos(cond.max_incidence_deg * kPi / 180.0);
  Rng rng(mix_seed(seed, 0x6f627365727665ULL));

  for (int frame = 0; frame < static_cast<int>(traj.size()); ++frame) {
    const Pose& body = traj[frame].pose;
    for (int ci = 0; ci < static_cast<int>(rig.cameras.size()); ++ci) {
      const CameraModel& cam = rig.cameras[ci];
      const Pose T_cam_world = (body * cam.extrinsic).inverse();

      for (const auto& marker : layout.markers) {
        if (!lit) continue;
        if (!marker_visible(marker, opt.layout_pose, cam, body, cond)) {
          continue;
        }
        if (cond.dropout_prob > 0 && rng.uniform01() < cond.dropout_prob) {
          continue;
        }
        Detection det;
        det.t = traj[frame].t;
        det.frame = frame;
        det.camera = ci;
        det.marker_id = marker.id;
        bool ok = true;
        const Pose T_world_marker = opt.layout_pose * marker.pose;
        const auto local = marker_corners_local(marker.side);
        for (int k = 0; k < 4 && ok; ++k) {
          const Vec3 p_cam = T_cam_world * (T_world_marker * local[k]);
          Vec2 px = project(cam, p_cam).pixel;
          if (cond.pixel_noise_sigma > 0) {
            px.x() += cond.pixel_noise_sigma * rng.gaussian();
            px.y() += cond.pixel_noise_sigma * rng.gaussian();
          }
          // A corner pushed off the sensor kills the whole detection, the
          // way a real detector loses a partially visible tag.
          if (px.x() < 0 || px.x() >= cam.width || px.y() < 0 ||
              px.y() >= cam.height) {
            ok = false;
          }
          det.corners[k] = px;
        }
        if (ok) log.detections.push_back(det);
      }

      for (int fi = 0; fi < static_cast<int>(features.size()); ++fi) {
        if (!lit) continue;
        const Vec3& pw = features[fi];
        const Vec3 to_cam = body * cam.extrinsic.translation() - pw;
        if (to_cam.norm() < 1e-12) continue;
        if (Vec3::UnitZ().dot(to_cam.normalized()) < cos_max_inc) continue;
        const Vec3 p_cam = T_cam_world * pw;
        const auto proj = try_project(cam, p_cam);
        if (!proj || !proj->in_image) continue;
        if (cond.dropout_prob > 0 && rng.uniform01() < cond.dropout_prob) {
          continue;
        }
        Vec2 px = proj->pixel;
        if (cond.pixel_noise_sigma > 0) {
          px.x() += cond.pixel_noise_sigma * rng.gaussian();
          px.y() += cond.pixel_noise_sigma * rng.gaussian();
        }
        if (px.x() < 0 || px.x() >= cam.width || px.y() < 0 ||
            px.y() >= cam.height) {
          continue;
        }
        log.features.push_back({frame, ci, fi, px});
      }
    }
  }
  return log;
}

}  // namespace tagbench
