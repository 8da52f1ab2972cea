// Release gate. Each criterion prints exactly one [PASS]/[FAIL] line with
// the measured numbers; the process exit status is the number of failures.
// Optional argv: a list of criterion numbers to run (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "tagbench/eval.hpp"
#include "tagbench/experiment.hpp"
#include "tagbench/factor_graph.hpp"
#include "tagbench/flightsim.hpp"
#include "tagbench/geometry.hpp"
#include "tagbench/io.hpp"
#include "tagbench/layout.hpp"
#include "tagbench/pnp.hpp"
#include "tagbench/slam.hpp"

using namespace tagbench;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

Trajectory to_trajectory(const SlamResult& r) {
  Trajectory out;
  out.reserve(r.trajectory.size());
  for (const auto& [frame, pose] : r.trajectory)
    out.push_back({r.frame_time(frame), pose});
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Pose random_rigid(Rng& rng, double max_angle, double max_trans) {
  Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  if (axis.norm() < 1e-9) axis = Vec3::UnitX();
  axis.normalize();
  const Quat q(Eigen::AngleAxisd(max_angle * rng.uniform01(), axis));
  auto u = [&] { return 2.0 * rng.uniform01() - 1.0; };
  return Pose(q, max_trans * Vec3(u(), u(), u()));
}

// The default flight over the nested pad with noise-free observations,
// solved once and shared between the loop-closure and availability checks.
struct ZeroNoiseRun {
  Trajectory gt;
  DetectionLog log;
  SlamResult result;
  double runtime_s = 0;
};

const ZeroNoiseRun& zero_noise_run() {
  static ZeroNoiseRun run = [] {
    ZeroNoiseRun r;
    const auto start = std::chrono::steady_clock::now();
    const FlightProfile profile;
    r.gt = generate_flight_profile(profile);
    const MarkerLayout layout = generate_nested(1.0, 0);
    const CameraRig rig = CameraRig::default_rig();
    r.log = simulate_observations(r.gt, layout, rig, VisibilityConditions{},
                                  /*seed=*/1);
    r.result = run_slam(r.log, rig, layout, SlamOptions{});
    r.runtime_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    return r;
  }();
  return run;
}

// 1. Noise-free default flight, marker-only: the estimate reproduces the
// ground truth, availability is the exact detection-bearing fraction, and
// the whole run stays well inside interactive time.
bool loop_closure(std::string& detail) {
  const ZeroNoiseRun& run = zero_noise_run();
  const double ate = ate_rmse(to_trajectory(run.result), run.gt);
  const int seen = run.log.frames_with_detections();
  const bool exact =
      run.result.n_estimated == seen &&
      run.result.availability == availability(seen, run.log.total_frames);
  detail = fmt("ate %.3g m, frames %d/%d %s, %.1f s", ate,
               run.result.n_estimated, run.result.n_total,
               exact ? "exact" : "MISMATCH", run.runtime_s);
  return ate < 1e-6 && exact && run.runtime_s < 60.0;
}

// 2. Planar PnP: exact recovery on noise-free corners across the usable
// range band, and under pixel noise the three concentric markers beat the
// single large one (paired trials, median pose error).
bool pnp_oracle(std::string& detail) {
  const CameraModel cam = CameraModel::with_default_intrinsics(2448, 2048);
  Rng rng(101);
  auto u = [&] { return 2.0 * rng.uniform01() - 1.0; };

  auto random_view = [&](double range) {
    const Pose nadir(Quat(0, 1, 0, 0), Vec3(0, 0, range));
    Vec3 axis(u(), u(), 0.3 * u());
    if (axis.norm() < 1e-9) axis = Vec3::UnitX();
    axis.normalize();
    const Quat q(Eigen::AngleAxisd(2.0 * kPi * rng.uniform01(), Vec3::UnitZ()) *
                 Eigen::AngleAxisd(0.6 * rng.uniform01(), axis));
    const Vec3 t(0.1 * range * u(), 0.1 * range * u(), 0.05 * range * u());
    return nadir * Pose(q, t);
  };

  int exact_ok = 0;
  const int n_exact = 1000;
  const auto corners = marker_corners_local(1.0);
  for (int trial = 0; trial < n_exact; ++trial) {
    const Pose truth = random_view(5.0 + 15.0 * rng.uniform01());
    std::vector<Correspondence> corrs;
    for (const auto& c : corners)
      corrs.push_back({c, project(cam, truth * c).pixel});
    const PnPResult sol = solve_planar_pnp(corrs, cam);
    const double et = (sol.pose.translation() - truth.translation()).norm();
    const double er = rotation_distance(sol.pose, truth);
    if (et < 1e-6 && er < 1e-6) ++exact_ok;
  }

  const MarkerLayout nested = generate_nested(1.0, 0);
  int large_id = nested.markers.front().id;
  for (const auto& m : nested.markers)
    if (m.side > nested.at(large_id).side) large_id = m.id;

  // The nested advantage under noise is a few percent (the inner markers
  // carry little depth information at these ranges), so the medians need a
  // large sample to sit clear of their own sampling noise.
  std::vector<double> t3, t1, r3, r1;
  const int n_noisy = 10000;
  const double sigma = 0.5;
  int solver_failures = 0;
  for (int trial = 0; trial < n_noisy; ++trial) {
    const Pose truth = random_view(5.0 + 15.0 * rng.uniform01());
    std::vector<Correspondence> all, large;
    for (const auto& m : nested.markers) {
      const auto world = marker_corners_world(nested, m.id);
      for (const auto& w : world) {
        const Vec2 noisy = project(cam, truth * w).pixel +
                           sigma * Vec2(rng.gaussian(), rng.gaussian());
        all.push_back({w, noisy});
        if (m.id == large_id) large.push_back({w, noisy});
      }
    }
    try {
      const PnPResult s3 = solve_planar_pnp(all, cam);
      const PnPResult s1 = solve_planar_pnp(large, cam);
      t3.push_back((s3.pose.translation() - truth.translation()).norm());
      t1.push_back((s1.pose.translation() - truth.translation()).norm());
      r3.push_back(rotation_distance(s3.pose, truth));
      r1.push_back(rotation_distance(s1.pose, truth));
    } catch (const Error&) {
      ++solver_failures;
    }
  }
  const double mt3 = median(t3), mt1 = median(t1);
  const double mr3 = median(r3), mr1 = median(r1);
  detail = fmt(
      "noise-free %d/%d under 1e-6; noisy medians %.4f < %.4f m, "
      "%.5f < %.5f rad, %d solver failures",
      exact_ok, n_exact, mt3, mt1, mr3, mr1, solver_failures);
  return exact_ok == n_exact && solver_failures == 0 && mt3 < mt1 && mr3 < mr1;
}

// 3. Analytic reprojection Jacobians against central differences, h = 1e-6,
// over 100 random valid configurations on both rig cameras.
bool jacobian_check(std::string& detail) {
  const CameraRig rig = CameraRig::default_rig();
  Rng rng(33);
  auto u = [&] { return 2.0 * rng.uniform01() - 1.0; };
  const double h = 1e-6;
  double worst = 0;
  int done = 0, attempts = 0;

  while (done < 100 && attempts < 2000) {
    ++attempts;
    CameraModel cam = rig.cameras[done % 2];
    if (done % 4 < 2) {
      cam.k1 = 0.06;
      cam.k2 = -0.004;
    }
    // Put the marker where this camera actually looks: straight below for
    // the down camera, ahead of the vehicle for the oblique one.
    const double ahead = (done % 2 == 0) ? 0.0 : 5.0;
    const Pose body(Quat(Eigen::AngleAxisd(0.3 * u(), Vec3::UnitZ()) *
                         Eigen::AngleAxisd(0.2 * u(), Vec3::UnitY()) *
                         Eigen::AngleAxisd(0.2 * u(), Vec3::UnitX())),
                    Vec3(0.5 * u(), 0.5 * u(), 5.0 + u()));
    const Pose marker(Quat(Eigen::AngleAxisd(0.5 * u(), Vec3::UnitZ()) *
                           Eigen::AngleAxisd(0.3 * u(), Vec3::UnitX())),
                      Vec3(ahead + u(), u(), 0));
    const double side = 0.3 + 0.7 * rng.uniform01();

    std::array<Vec2, 4> obs;
    const Pose T_cam_world = (body * cam.extrinsic).inverse();
    const auto local = marker_corners_local(side);
    bool valid = true;
    for (int k = 0; k < 4; ++k) {
      const Vec3 p = T_cam_world * (marker * local[k]);
      if (p.z() <= 0.1) {
        valid = false;
        break;
      }
      obs[k] = project(cam, p).pixel + Vec2(0.3 * u(), 0.3 * u());
    }
    if (!valid) continue;

    Eigen::Matrix<double, 8, 1> r;
    Eigen::Matrix<double, 8, 6> Jb, Jm;
    if (!marker_reprojection_jacobians(cam, body, marker, side, obs, r, Jb,
                                       Jm))
      continue;

    for (int i = 0; i < 6; ++i) {
      Twist d(Vec3::Zero(), Vec3::Zero());
      (i < 3 ? d.rot : d.trans)(i % 3) = h;
      const Eigen::Matrix<double, 8, 1> fd_body =
          (marker_reprojection_residual(cam, body * se3_exp(d), marker, side,
                                        obs) -
           marker_reprojection_residual(cam, body * se3_exp(d.scaled(-1.0)),
                                        marker, side, obs)) /
          (2 * h);
      const Eigen::Matrix<double, 8, 1> fd_marker =
          (marker_reprojection_residual(cam, body, marker * se3_exp(d), side,
                                        obs) -
           marker_reprojection_residual(
               cam, body, marker * se3_exp(d.scaled(-1.0)), side, obs)) /
          (2 * h);
      worst = std::max(worst, (Jb.col(i) - fd_body).cwiseAbs().maxCoeff());
      worst = std::max(worst, (Jm.col(i) - fd_marker).cwiseAbs().maxCoeff());
    }
    ++done;
  }
  detail = fmt("max |J - fd| = %.3g over %d states", worst, done);
  return done == 100 && worst < 1e-4;
}

// 4. ATE is invariant when the whole estimate is moved by a rigid
// transform: alignment must absorb the gauge exactly.
bool alignment_invariance(std::string& detail) {
  const Trajectory gt = generate_flight_profile(FlightProfile{});
  Rng rng(44);
  Trajectory est = gt;
  for (auto& tp : est)
    tp.pose = tp.pose * random_rigid(rng, 0.05, 0.1);

  const double base = ate_rmse(est, gt);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Pose G = random_rigid(rng, 3.0, 50.0);
    Trajectory moved = est;
    for (auto& tp : moved)
      tp.pose = G * tp.pose;
    worst = std::max(worst, std::abs(ate_rmse(moved, gt) - base));
  }
  detail = fmt("base ate %.4f m, max deviation %.3g over 100 moves", base,
               worst);
  return worst < 1e-9;
}

// 5. The illumination gate reproduces the pass/fail pattern: at 30 Lux no
// marker clears the floor so the pipeline reports nothing (a dash in the
// rendered table); at 1200 and 4000 Lux it produces converged estimates.
bool illumination_failure(std::string& detail) {
  const FlightProfile profile;
  const Trajectory gt = generate_flight_profile(profile);
  const MarkerLayout layout = generate_nested(1.0, 0);
  const CameraRig rig = CameraRig::default_rig();

  auto run_at = [&](double lux) {
    VisibilityConditions cond;
    cond.illumination = lux;
    cond.pixel_noise_sigma = 0.5;
    return simulate_observations(gt, layout, rig, cond, /*seed=*/555);
  };

  const DetectionLog dark = run_at(30);
  bool dark_ok = dark.detections.empty();
  if (dark_ok) {
    try {
      run_slam(dark, rig, layout, SlamOptions{});
      dark_ok = false;
    } catch (const Error&) {
    }
  }

  std::vector<TrialMetrics> rows(2);
  rows[0].trial = 0;
  rows[0].mode = "marker";
  rows[0].solved = false;
  rows[0].n_total = dark.total_frames;

  double ate1200 = -1, ate4000 = -1;
  bool bright_ok = true;
  for (double lux : {1200.0, 4000.0}) {
    const DetectionLog log = run_at(lux);
    try {
      const SlamResult r = run_slam(log, rig, layout, SlamOptions{});
      const double ate = ate_rmse(to_trajectory(r), gt);
      (lux == 1200.0 ? ate1200 : ate4000) = ate;
      bright_ok = bright_ok && r.opt.converged && r.n_estimated > 0 &&
                  std::isfinite(ate) && ate < 1.0;
      if (lux == 1200.0) {
        rows[1].trial = 1;
        rows[1].mode = "marker";
        rows[1].solved = true;
        rows[1].ate = ate;
        rows[1].avail = r.availability;
        rows[1].n_estimated = r.n_estimated;
        rows[1].n_total = r.n_total;
        rows[1].converged = r.opt.converged;
      }
    } catch (const Error&) {
      bright_ok = false;
    }
  }

  // The unsolved row renders as dashes, the solved one as numbers.
  const std::string table = metrics_table(rows);
  const bool dash_ok = table.find("-          -") != std::string::npos;

  detail = fmt("30 lux -> %s; 1200 lux ate %.3f m; 4000 lux ate %.3f m%s",
               dark_ok ? "no solution" : "UNEXPECTED SOLUTION", ate1200,
               ate4000, dash_ok ? "" : "; table dash missing");
  return dark_ok && bright_ok && dash_ok;
}

// 6. Availability on the default flight: the reported ratio must equal the
// simulator's own visibility count exactly, and sit inside (0.7, 0.95).
bool availability_window(std::string& detail) {
  const ZeroNoiseRun& run = zero_noise_run();
  const int seen = run.log.frames_with_detections();
  const double a = run.result.availability;
  const bool exact =
      run.result.n_estimated == seen &&
      a == availability(seen, run.log.total_frames);
  const bool in_window = a > 0.7 && a < 0.95;
  detail = fmt("availability %d/%d = %.4f, count %s, window (0.7, 0.95) %s",
               run.result.n_estimated, run.result.n_total, a,
               exact ? "exact" : "MISMATCH", in_window ? "ok" : "violated");
  return exact && in_window;
}

// 7. Marker-only and feature-aided runs on the same low-texture logs over
// ten seeds: availability matches within 0.05 on every seed and the median
// ATEs agree within a factor of two. The comparison is distribution-level
// on purpose. On single seeds the sparse ground points occasionally cluster
// under the flight path and bridge subgraphs that markers alone leave
// disconnected, cutting that seed's feature-mode error severalfold; no
// marker-only estimate of the same log can follow that, so per-seed ratios
// legitimately spread while the medians stay close.
bool mode_equivalence(std::string& detail) {
  const FlightProfile profile;
  const Trajectory gt = generate_flight_profile(profile);
  const MarkerLayout layout = generate_nested(1.0, 0);
  const CameraRig rig = CameraRig::default_rig();
  VisibilityConditions cond;
  cond.pixel_noise_sigma = 0.5;

  double worst_avail_diff = 0, ratio_lo = 1e300, ratio_hi = 0;
  std::vector<double> ates_marker, ates_feature;
  std::string first_error;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    try {
      const DetectionLog log =
          simulate_observations(gt, layout, rig, cond, seed);
      SlamOptions marker_only;
      SlamOptions with_features;
      with_features.mode = SlamMode::MarkerPlusFeature;
      const SlamResult a = run_slam(log, rig, layout, marker_only);
      const SlamResult b = run_slam(log, rig, layout, with_features);
      const double avail_diff = std::abs(a.availability - b.availability);
      const double ate_a = ate_rmse(to_trajectory(a), gt);
      const double ate_b = ate_rmse(to_trajectory(b), gt);
      const double ratio = ate_a / std::max(ate_b, 1e-300);
      worst_avail_diff = std::max(worst_avail_diff, avail_diff);
      ratio_lo = std::min(ratio_lo, ratio);
      ratio_hi = std::max(ratio_hi, ratio);
      ates_marker.push_back(ate_a);
      ates_feature.push_back(ate_b);
    } catch (const Error& e) {
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (ates_marker.size() != 10 || !first_error.empty()) {
    detail = fmt("%zu/10 runs; error: %s", ates_marker.size(),
                 first_error.c_str());
    return false;
  }
  const double med_marker = median(ates_marker);
  const double med_feature = median(ates_feature);
  const double med_ratio = med_marker / std::max(med_feature, 1e-300);
  detail = fmt(
      "median ate %.3f/%.3f m, ratio %.2f, per-seed ratios [%.2f, %.2f], "
      "max avail diff %.3g",
      med_marker, med_feature, med_ratio, ratio_lo, ratio_hi,
      worst_avail_diff);
  return worst_avail_diff <= 0.05 && med_ratio >= 0.5 && med_ratio <= 2.0;
}

// 8. Layout generators: exact counts and scale ratios, and the JSON
// serialization round-trips bit for bit.
bool layout_invariants(std::string& detail) {
  const MarkerLayout flat = generate_non_nested(1.0, 0);
  const MarkerLayout nested = generate_nested(1.0, 100);

  auto ratio_set = [](const MarkerLayout& l) {
    std::set<long long> r;
    double smallest = l.markers.front().side;
    for (const auto& m : l.markers) smallest = std::min(smallest, m.side);
    for (const auto& m : l.markers) r.insert(std::llround(m.side / smallest));
    return r;
  };

  bool ok = flat.markers.size() == 20 && nested.markers.size() == 3;
  ok = ok && ratio_set(flat) == std::set<long long>{1, 5, 28};
  ok = ok && ratio_set(nested) == std::set<long long>{1, 4, 30};
  try {
    validate_layout(flat);
    validate_layout(nested);
  } catch (const Error&) {
    ok = false;
  }

  const fs::path dir =
      fs::temp_directory_path() /
      ("tagbench_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  bool round_trip = true;
  for (const MarkerLayout* l : {&flat, &nested}) {
    const std::string path = (dir / "layout.json").string();
    save_layout(*l, path);
    const MarkerLayout back = load_layout(path);
    round_trip = round_trip && back.markers.size() == l->markers.size();
    for (size_t i = 0; round_trip && i < l->markers.size(); ++i) {
      const MarkerSpec& m = l->markers[i];
      const MarkerSpec& n = back.markers[i];
      round_trip = m.id == n.id && m.side == n.side &&
                   m.pose.translation() == n.pose.translation() &&
                   m.pose.rotation().coeffs() == n.pose.rotation().coeffs();
    }
    const std::string first = read_file(path);
    save_layout(back, path);
    round_trip = round_trip && read_file(path) == first;
  }
  fs::remove_all(dir);

  detail = fmt("%zu + %zu markers, ratios 1:5:28 and 1:4:30, round-trip %s",
               flat.markers.size(), nested.markers.size(),
               round_trip ? "byte-identical" : "DIFFERS");
  return ok && round_trip;
}

// 9. The experiment driver is a pure function of its manifest: running the
// same configuration twice yields byte-identical metrics.
bool deterministic_metrics(std::string& detail) {
  ExperimentConfig config;
  config.trials = 2;
  config.seed = 7;
  config.visibility.pixel_noise_sigma = 0.5;
  const ExperimentResult a = run_experiment(config);
  const ExperimentResult b = run_experiment(config);
  const bool same_csv = a.csv == b.csv && !a.csv.empty();
  const bool same_hash = manifest_hash(a.manifest) == manifest_hash(b.manifest);
  detail = fmt("%zu rows, %zu bytes, csv %s, manifest hash %s",
               a.rows.size(), a.csv.size(),
               same_csv ? "identical" : "DIFFERS",
               same_hash ? "stable" : "DIFFERS");
  return same_csv && same_hash;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    bool (*fn)(std::string&);
  };
  const std::vector<Criterion> criteria = {
      {"zero-noise loop closure", loop_closure},
      {"pnp oracle suite", pnp_oracle},
      {"reprojection jacobians", jacobian_check},
      {"alignment invariance", alignment_invariance},
      {"illumination failure", illumination_failure},
      {"availability window", availability_window},
      {"mode equivalence", mode_equivalence},
      {"layout invariants", layout_invariants},
      {"deterministic metrics", deterministic_metrics},
  };

  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(number)) continue;
    std::string detail;
    bool good = false;
    try {
      good = criteria[i].fn(detail);
    } catch (const std::exception& e) {
      detail = fmt("exception: %s", e.what());
    }
    std::printf("[%s] %d. %s: %s\n", good ? "PASS" : "FAIL", number,
                criteria[i].name, detail.c_str());
    std::fflush(stdout);
    if (!good) ++failures;
  }
  return failures;
}
