#pragma once

// Synthetic flight and observation generator.
//
// The vehicle climbs vertically off the pad, flies a straight out-and-back
// leg at constant height, and descends back onto the pad:
//   ascend (hover_alt / climb_rate s), traverse out (traverse_dist / speed s),
//   pause (pause s, yaw turn to face home), traverse back, descend.
// Poses are sampled at frame_rate Hz starting at t = 0; with the defaults
// (5 m, 40 m, 1 m/s, 1 m/s, 3 s, 20 Hz) that is 93 s and 1861 samples, an
// 8:1 traverse-to-climb ratio.
//
// Marker visibility requires, per camera: all four corners projecting inside
// the image, center range within [range_min_ratio, range_max_ratio] * side,
// incidence angle at most max_incidence_deg, and scene illumination at least
// min_illumination. Detections passing those gates are then dropped with
// probability dropout_prob, and pixel noise is added last.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "tagbench/geometry.hpp"
#include "tagbench/layout.hpp"

namespace tagbench {

struct FlightProfile {
  double hover_alt = 5.0;       // traverse altitude, m
  double traverse_dist = 40.0;  // one-way horizontal leg, m
  double speed = 1.0;           // traverse speed, m/s
  double climb_rate = 1.0;      // ascent and descent rate, m/s
  double pause = 3.0;           // hold at the far end, s
  double frame_rate = 20.0;     // Hz
  bool fixed_yaw = false;       // keep yaw 0 instead of facing travel

  void validate() const;        // throws Error on non-positive parameters
  double total_time() const;
};

struct TimedPose {
  double t = 0;
  Pose pose;  // body frame in the world frame
};

using Trajectory = std::vector<TimedPose>;

Trajectory generate_flight_profile(const FlightProfile& profile);

// Closed-form body pose at time t in [0, total_time].
Pose flight_pose_at(const FlightProfile& profile, double t);

struct VisibilityConditions {
  double illumination = 6000;     // scene illumination, Lux
  double pixel_noise_sigma = 0;   // i.i.d. Gaussian corner noise, px
  double dropout_prob = 0;        // chance of losing a passing detection
  double min_illumination = 100;  // Lux floor for any detection
  double range_min_ratio = 5;     // min center distance, in marker sides
  double range_max_ratio = 20;    // max center distance, in marker sides
  double max_incidence_deg = 60;  // between marker normal and camera ray

  void validate() const;
};

struct Detection {
  double t = 0;
  int frame = 0;
  int camera = 0;
  int marker_id = 0;
  std::array<Vec2, 4> corners;  // TL, TR, BR, BL pixel positions
};

struct FeatureObservation {
  int frame = 0;
  int camera = 0;
  int feature_id = 0;
  Vec2 pixel = Vec2::Zero();
};

struct DetectionLog {
  std::string rig_hash;  // sha256 over the rig parameters
  int total_frames = 0;
  double t0 = 0;
  double frame_rate = 20.0;
  std::vector<Detection> detections;
  std::vector<FeatureObservation> features;

  double frame_time(int frame) const { return t0 + frame / frame_rate; }
  // Number of frames carrying at least one marker detection.
  int frames_with_detections() const;
};

// Sparse ground texture for the feature-aided mode: feature_count points
// drawn uniformly over the runway rectangle, fixed per seed.
struct SimOptions {
  int feature_count = 50;
  double runway_x_min = -10, runway_x_max = 50;
  double runway_y_min = -6, runway_y_max = 6;
  Pose layout_pose;  // layout frame in the world frame
};

// Deterministic RNG used by the simulator: mt19937_64 with explicit
// uniform and Box-Muller normal draws so streams are reproducible
// independent of the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}
  double uniform01();  // [0, 1)
  double gaussian();   // standard normal

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0;
};

// All gates except illumination and dropout, for one marker and one camera.
bool marker_visible(const MarkerSpec& marker, const Pose& layout_pose,
                    const CameraModel& cam, const Pose& body_pose,
                    const VisibilityConditions& cond);

DetectionLog simulate_observations(const Trajectory& traj,
                                   const MarkerLayout& layout,
                                   const CameraRig& rig,
                                   const VisibilityConditions& cond,
                                   uint64_t seed,
                                   const SimOptions& options = {});

std::vector<Vec3> generate_feature_field(const SimOptions& options,
                                         uint64_t seed);

std::string rig_content_hash(const CameraRig& rig);

}  // namespace tagbench
