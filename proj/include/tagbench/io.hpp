#pragma once

// Serialization of every run artifact, with pinned schemas:
//
//   trajectory / estimate CSV : t,x,y,z,qw,qx,qy,qz
//   detections CSV            : t,frame,cam,marker_id,u0,v0,u1,v1,u2,v2,u3,v3
//   features CSV              : frame,cam,feature_id,u,v
//
// Numbers are written with 17 significant digits so load(save(x)) is
// bit-exact. log.json and manifest.json carry sha256 content hashes of the
// files they reference; loaders verify them and refuse tampered inputs.

#include <cstdint>
#include <map>
#include <string>

#include "tagbench/eval.hpp"
#include "tagbench/flightsim.hpp"
#include "tagbench/layout.hpp"
#include "tagbench/slam.hpp"

namespace tagbench {

void save_layout(const MarkerLayout& layout, const std::string& path);
MarkerLayout load_layout(const std::string& path);

void save_trajectory(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path);

// Writes detections.csv, features.csv and log.json into dir; log.json
// records the two file hashes. Returns the log.json path.
std::string save_detection_log(const DetectionLog& log,
                               const std::string& dir);
// Loads via log.json, verifying the recorded hashes (HashMismatchError).
DetectionLog load_detection_log(const std::string& log_json_path);

// Everything needed to reproduce a run, and hashes of the input artifacts.
struct RunManifest {
  int version = 1;
  uint64_t seed = 1;
  std::string layout_kind = "non_nested";
  double base_side = 1.0;
  FlightProfile profile;
  VisibilityConditions visibility;
  SimOptions sim;
  std::string mode = "marker";  // "marker" or "marker+feature"
  int stride = 1;
  int min_feature_track = 8;
  std::map<std::string, std::string> input_hashes;  // filename -> sha256
};

// Canonical JSON bytes (sorted keys, 17 digit numbers) and their hash.
std::string manifest_canonical_json(const RunManifest& m);
std::string manifest_hash(const RunManifest& m);

void save_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

// Re-hashes every file recorded in the manifest, resolving names relative
// to the manifest's directory. Throws HashMismatchError on any difference.
void verify_manifest_inputs(const RunManifest& m,
                            const std::string& manifest_path);

// estimate.csv (trajectory schema, timestamps from the log's frame clock)
// plus result.json with counts, availability and optimizer diagnostics.
void save_slam_result(const SlamResult& result, const std::string& dir);

struct TrialMetrics {
  int trial = 0;
  uint64_t seed = 0;
  std::string mode;  // "marker" or "marker+feature"
  bool solved = false;
  double ate = 0;
  double rpe = 0;
  double avail = 0;
  int n_estimated = 0;
  int n_total = 0;
  double final_cost = 0;
  bool converged = false;
};

std::string metrics_csv(const std::vector<TrialMetrics>& rows);
// Fixed-width text table; unsolved cells render as "-".
std::string metrics_table(const std::vector<TrialMetrics>& rows);

void write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace tagbench
