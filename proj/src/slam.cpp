#include "tagbench/slam.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "tagbench/pnp.hpp"

namespace tagbench {

namespace {

// Camera pose in the world from one camera's 2D-3D matches, as a body pose.
Pose body_from_camera_pnp(const std::vector<Correspondence>& corrs,
                          const CameraModel& cam) {
  const PnPResult r = solve_planar_pnp(corrs, cam);
  const Pose T_world_cam = r.pose.inverse();
  return T_world_cam * cam.extrinsic.inverse();
}

// Planar pose for first-sight marker initialization. With four noisy
// corners the refined cost has only two residual degrees of freedom, so a
// spurious far-away minimum can fit the noise better than the true pose.
// Inside a single-marker component nothing later corrects that, the whole
// component just builds itself around the wrong pose. Guard: a refined
// candidate only counts if it stayed near its closed-form start; a refinement
// that hopped basins falls back to the closed-form pose and its (larger)
// cost, which lets the well-behaved candidate win.
Pose init_planar_pose(const std::vector<Correspondence>& corrs,
                      const CameraModel& cam) {
  std::vector<Correspondence> ideal = corrs;
  if (cam.k1 != 0.0 || cam.k2 != 0.0) {
    for (auto& c : ideal) {
      const Vec3 p = unproject(cam, c.pixel, 1.0);
      c.pixel = Vec2(cam.fx * p.x() + cam.cx, cam.fy * p.y() + cam.cy);
    }
  }
  const auto rms_at = [&](const Pose& T) {
    double ss = 0;
    for (const auto& c : corrs) {
      const Vec2 px = project(cam, T * c.world).pixel;
      ss += (px - c.pixel).squaredNorm();
    }
    return std::sqrt(ss / (2.0 * corrs.size()));
  };
  const auto candidates = pose_from_homography(homography_dlt(ideal), cam);
  Pose best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const Pose& start : candidates) {
    Pose pose = start;
    double cost;
    try {
      const PnPResult r = refine_pose(start, corrs, cam);
      const double range = std::max(start.translation().norm(), 1e-9);
      const bool local =
          rotation_distance(r.pose, start) < 0.5 &&
          (r.pose.translation() - start.translation()).norm() < 0.3 * range;
      if (local) {
        pose = r.pose;
        cost = r.rms_px;
      } else {
        cost = rms_at(start);
      }
    } catch (const Error&) {
      try {
        cost = rms_at(start);
      } catch (const Error&) {
        continue;
      }
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = pose;
    }
  }
  if (!std::isfinite(best_cost)) {
    throw DegenerateConfigError("init_planar_pose: no usable candidate");
  }
  return best;
}

// Constant-velocity continuation of the recent trajectory; falls back to
// copying or the identity when history is short. Velocity is fit over a
// short window of recent frames, not just the last pair: a long detection
// gap multiplies the velocity estimate by the gap length, which amplifies
// per-frame pose noise by the same factor. Rotation is not extrapolated at
// all. Rotational velocity recovered from consecutive noisy single-marker
// poses is nearly pure noise, and scaled across a gap it can tip the next
// component's whole gauge; holding the window's mean orientation is exact
// for constant-attitude motion and bounded everywhere else.
Pose extrapolate_body(const std::map<int, Pose>& body, int frame) {
  if (body.empty()) return Pose::Identity();
  constexpr int kMaxWindow = 30;
  constexpr int kMaxWindowSpan = 35;
  std::vector<std::pair<int, const Pose*>> window;  // newest first
  const int f_last = body.rbegin()->first;
  for (auto it = body.rbegin();
       it != body.rend() && static_cast<int>(window.size()) < kMaxWindow;
       ++it) {
    if (f_last - it->first > kMaxWindowSpan) break;
    window.emplace_back(it->first, &it->second);
  }
  const Pose& last = *window.front().second;
  if (window.size() < 2) return last;

  // least-squares slope of translation against frame index
  double f_mean = 0;
  Vec3 t_mean = Vec3::Zero();
  for (const auto& [f, T] : window) {
    f_mean += f;
    t_mean += T->translation();
  }
  f_mean /= window.size();
  t_mean /= window.size();
  double ff = 0;
  Vec3 ft = Vec3::Zero();
  for (const auto& [f, T] : window) {
    const double df = f - f_mean;
    ff += df * df;
    ft += df * (T->translation() - t_mean);
  }
  const Vec3 velocity = ft / ff;

  Eigen::Vector4d qsum = Eigen::Vector4d::Zero();
  const Quat& q0 = last.rotation();
  for (const auto& [f, T] : window) {
    const Quat& q = T->rotation();
    const double sign = q0.coeffs().dot(q.coeffs()) < 0 ? -1.0 : 1.0;
    qsum += sign * q.coeffs();
  }
  const Quat q_mean(qsum(3), qsum(0), qsum(1), qsum(2));

  return Pose(q_mean.normalized(),
              last.translation() + velocity * (frame - f_last));
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// The optimizer leaves each disconnected component in whatever gauge its
// first frame inherited from init-time extrapolation, which runs over raw
// single-frame poses and is noisy. After convergence the preceding
// component's bodies are a much cleaner velocity source, so each later
// component is re-anchored rigidly: extrapolate its first body pose from the
// (already re-anchored) bodies before it and move the whole component to
// match. A rigid move of a full component changes no residual, so the
// solution stays optimal and no second solve is needed.
void reanchor_components(FactorGraph& graph) {
  if (graph.priors.empty() || graph.body_states.empty()) return;
  std::map<int, int> body_idx, marker_idx, feature_idx;
  int n = 0;
  for (const auto& [f, T] : graph.body_states) body_idx[f] = n++;
  for (const auto& [id, T] : graph.marker_states) marker_idx[id] = n++;
  for (const auto& [id, p] : graph.feature_states) feature_idx[id] = n++;
  UnionFind uf(n);
  for (const auto& f : graph.marker_factors) {
    uf.unite(body_idx.at(f.frame), marker_idx.at(f.marker_id));
  }
  for (const auto& f : graph.feature_factors) {
    uf.unite(body_idx.at(f.frame), feature_idx.at(f.feature_id));
  }

  std::map<int, std::vector<int>> comp_frames;  // root -> frames, ascending
  for (const auto& [f, T] : graph.body_states) {
    comp_frames[uf.find(body_idx.at(f))].push_back(f);
  }
  std::vector<std::pair<int, int>> order;  // (first frame, root)
  for (const auto& [root, frames] : comp_frames) {
    order.emplace_back(frames.front(), root);
  }
  std::sort(order.begin(), order.end());

  const int pinned_root = uf.find(body_idx.at(graph.priors.front().frame));
  std::map<int, Pose> reference;
  for (const auto& [first_frame, root] : order) {
    if (root != pinned_root && !reference.empty()) {
      const std::map<int, Pose> earlier(reference.begin(),
                                        reference.lower_bound(first_frame));
      if (!earlier.empty()) {
        const Pose target = extrapolate_body(earlier, first_frame);
        const Pose G = target * graph.body_states.at(first_frame).inverse();
        for (const int f : comp_frames.at(root)) {
          graph.body_states.at(f) = G * graph.body_states.at(f);
        }
        for (auto& [id, T] : graph.marker_states) {
          if (uf.find(marker_idx.at(id)) == root) T = G * T;
        }
        for (auto& [id, p] : graph.feature_states) {
          if (uf.find(feature_idx.at(id)) == root) p = G * p;
        }
      }
    }
    for (const int f : comp_frames.at(root)) {
      reference[f] = graph.body_states.at(f);
    }
  }
}

// Linear least-squares triangulation from undistorted rays.
bool triangulate(const std::vector<std::pair<Pose, Vec2>>& obs_cam_norm,
                 Vec3& out) {
  if (obs_cam_norm.size() < 2) return false;
  Eigen::MatrixXd A(2 * obs_cam_norm.size(), 3);
  Eigen::VectorXd b(2 * obs_cam_norm.size());
  int row = 0;
  for (const auto& [T_cam_world, xn] : obs_cam_norm) {
    const Mat3 R = T_cam_world.rotation_matrix();
    const Vec3 t = T_cam_world.translation();
    A.row(row) = (xn.x() * R.row(2) - R.row(0));
    b(row) = t.x() - xn.x() * t.z();
    ++row;
    A.row(row) = (xn.y() * R.row(2) - R.row(1));
    b(row) = t.y() - xn.y() * t.z();
    ++row;
  }
  const Vec3 X = A.colPivHouseholderQr().solve(b);
  if (!X.allFinite()) return false;
  out = X;
  return true;
}

}  // namespace

SlamResult run_slam(const DetectionLog& log, const CameraRig& rig,
                    const MarkerLayout& layout, const SlamOptions& opts) {
  if (opts.stride < 1) throw Error("run_slam: stride must be >= 1");
  if (opts.min_feature_track < 2) {
    throw Error("run_slam: min_feature_track must be >= 2");
  }
  if (rig.cameras.empty()) throw Error("run_slam: empty rig");
  if (log.total_frames <= 0) throw Error("run_slam: empty log");

  // Strided detections by frame; unknown marker ids fail fast.
  std::map<int, std::vector<Detection>> dets_by_frame;
  for (const auto& d : log.detections) {
    if (d.frame < 0 || d.frame >= log.total_frames) {
      throw Error("run_slam: detection frame out of range");
    }
    layout.at(d.marker_id);  // existence check
    if (d.frame % opts.stride != 0) continue;
    dets_by_frame[d.frame].push_back(d);
  }
  if (dets_by_frame.empty()) {
    throw Error("run_slam: no marker detections to anchor on");
  }

  // Frames are only ever estimated off marker detections; the feature mode
  // adds factors to those same frames rather than extending coverage, so
  // availability is mode-independent by construction. Feature tracks
  // survive if they span enough estimated frames.
  std::set<int> est_frames;
  for (const auto& [f, v] : dets_by_frame) {
    (void)v;
    est_frames.insert(f);
  }
  std::map<int, std::vector<FeatureObservation>> feats_by_frame;
  if (opts.mode == SlamMode::MarkerPlusFeature) {
    std::map<int, std::set<int>> frames_per_feature;
    for (const auto& f : log.features) {
      if (!est_frames.count(f.frame)) continue;
      frames_per_feature[f.feature_id].insert(f.frame);
    }
    std::set<int> kept;
    for (const auto& [id, frames] : frames_per_feature) {
      if (static_cast<int>(frames.size()) >= opts.min_feature_track) {
        kept.insert(id);
      }
    }
    for (const auto& f : log.features) {
      if (!est_frames.count(f.frame) || !kept.count(f.feature_id)) continue;
      feats_by_frame[f.frame].push_back(f);
    }
  }

  // Sequential initialization. The slam world frame is the body frame of
  // the first estimated frame (it starts at the identity).
  std::map<int, Pose> body;
  std::map<int, Pose> markers;
  std::map<int, Vec3> feature_points;
  std::map<int, std::vector<std::pair<Pose, Vec2>>> feature_rays;

  for (int frame : est_frames) {
    std::vector<Detection> dets;
    if (auto it = dets_by_frame.find(frame); it != dets_by_frame.end()) {
      dets = it->second;
    }

    // Body pose: PnP off known markers, else off triangulated features,
    // else motion continuation.
    bool placed = false;
    {
      // Most known-marker corners wins; ties to the lower camera index.
      std::map<int, std::vector<Correspondence>> per_camera;
      for (const auto& d : dets) {
        auto mit = markers.find(d.marker_id);
        if (mit == markers.end()) continue;
        const auto local = marker_corners_local(layout.at(d.marker_id).side);
        for (int k = 0; k < 4; ++k) {
          per_camera[d.camera].push_back(
              {mit->second * local[k], d.corners[k]});
        }
      }
      int best_cam = -1;
      size_t best_n = 0;
      for (const auto& [cam, corrs] : per_camera) {
        if (corrs.size() > best_n) {
          best_n = corrs.size();
          best_cam = cam;
        }
      }
      if (best_cam >= 0 && best_n >= 4) {
        try {
          body[frame] = body_from_camera_pnp(per_camera[best_cam],
                                             rig.cameras[best_cam]);
          placed = true;
        } catch (const Error&) {
        }
      }
    }
    if (!placed && opts.mode == SlamMode::MarkerPlusFeature) {
      std::map<int, std::vector<Correspondence>> per_camera;
      if (auto it = feats_by_frame.find(frame); it != feats_by_frame.end()) {
        for (const auto& f : it->second) {
          auto pit = feature_points.find(f.feature_id);
          if (pit == feature_points.end()) continue;
          per_camera[f.camera].push_back({pit->second, f.pixel});
        }
      }
      int best_cam = -1;
      size_t best_n = 0;
      for (const auto& [cam, corrs] : per_camera) {
        if (corrs.size() > best_n) {
          best_n = corrs.size();
          best_cam = cam;
        }
      }
      if (best_cam >= 0 && best_n >= 4) {
        try {
          body[frame] = body_from_camera_pnp(per_camera[best_cam],
                                             rig.cameras[best_cam]);
          placed = true;
        } catch (const Error&) {
        }
      }
    }
    if (!placed) body[frame] = extrapolate_body(body, frame);

    // First sight of a marker fixes its initial pose from this body pose.
    for (const auto& d : dets) {
      if (markers.count(d.marker_id)) continue;
      const auto local = marker_corners_local(layout.at(d.marker_id).side);
      std::vector<Correspondence> corrs;
      for (int k = 0; k < 4; ++k) corrs.push_back({local[k], d.corners[k]});
      try {
        const Pose T_cam_marker = init_planar_pose(corrs, rig.cameras[d.camera]);
        const Pose T_world_cam =
            body[frame] * rig.cameras[d.camera].extrinsic;
        markers[d.marker_id] = T_world_cam * T_cam_marker;
      } catch (const Error&) {
        // leave it for a later, better view
      }
    }

    // Accumulate feature rays and refresh triangulations.
    if (auto it = feats_by_frame.find(frame); it != feats_by_frame.end()) {
      for (const auto& f : it->second) {
        const CameraModel& cam = rig.cameras[f.camera];
        const Vec3 ray = unproject(cam, f.pixel, 1.0);
        const Pose T_cam_world = (body[frame] * cam.extrinsic).inverse();
        auto& rays = feature_rays[f.feature_id];
        rays.emplace_back(T_cam_world, Vec2(ray.x(), ray.y()));
        Vec3 X;
        if (rays.size() >= 2 && triangulate(rays, X)) {
          feature_points[f.feature_id] = X;
        }
      }
    }
  }

  // Assemble the graph. Factors only reference states that exist.
  FactorGraph graph;
  graph.rig = rig;
  graph.body_states = body;
  graph.marker_states = markers;
  for (const auto& [id, pose] : markers) {
    (void)pose;
    graph.marker_sides[id] = layout.at(id).side;
  }
  if (opts.mode == SlamMode::MarkerPlusFeature) {
    graph.feature_states = feature_points;
  }

  for (const auto& [frame, dets] : dets_by_frame) {
    for (const auto& d : dets) {
      if (!graph.marker_states.count(d.marker_id)) continue;
      graph.marker_factors.push_back(
          {frame, d.camera, d.marker_id, d.corners});
    }
  }
  if (opts.mode == SlamMode::MarkerPlusFeature) {
    for (const auto& [frame, feats] : feats_by_frame) {
      for (const auto& f : feats) {
        if (!graph.feature_states.count(f.feature_id)) continue;
        graph.feature_factors.push_back(
            {frame, f.camera, f.feature_id, f.pixel});
      }
    }
  }

  // Drop states no factor touches (e.g. a feature-only frame whose
  // features never triangulated), then pin the gauge at the first frame.
  {
    std::set<int> used_frames, used_markers, used_features;
    for (const auto& f : graph.marker_factors) {
      used_frames.insert(f.frame);
      used_markers.insert(f.marker_id);
    }
    for (const auto& f : graph.feature_factors) {
      used_frames.insert(f.frame);
      used_features.insert(f.feature_id);
    }
    std::erase_if(graph.body_states,
                  [&](const auto& kv) { return !used_frames.count(kv.first); });
    std::erase_if(graph.marker_states, [&](const auto& kv) {
      return !used_markers.count(kv.first);
    });
    std::erase_if(graph.marker_sides, [&](const auto& kv) {
      return !used_markers.count(kv.first);
    });
    std::erase_if(graph.feature_states, [&](const auto& kv) {
      return !used_features.count(kv.first);
    });
  }
  if (graph.body_states.empty()) {
    throw Error("run_slam: nothing to estimate after filtering");
  }
  PosePriorFactor prior;
  prior.frame = graph.body_states.begin()->first;
  prior.prior = graph.body_states.begin()->second;
  prior.rot_weight = opts.prior_rot_weight;
  prior.trans_weight = opts.prior_trans_weight;
  graph.priors.push_back(prior);

  SlamResult result;
  result.opt = optimize(graph, opts.optimize);
  reanchor_components(graph);
  result.n_total = log.total_frames;
  result.frame_rate = log.frame_rate;
  result.t0 = log.t0;
  result.frame_status.assign(log.total_frames, FrameStatus::NoMeasurement);
  for (const auto& [frame, pose] : graph.body_states) {
    result.trajectory.emplace_back(frame, pose);
    if (frame < log.total_frames) {
      result.frame_status[frame] = FrameStatus::Estimated;
    }
  }
  result.marker_map = graph.marker_states;
  result.feature_map = graph.feature_states;
  result.n_estimated = static_cast<int>(result.trajectory.size());
  result.availability =
      static_cast<double>(result.n_estimated) / result.n_total;
  return result;
}

}  // namespace tagbench
