#include "tagbench/io.hpp"

#include <json.hpp>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tagbench/hash.hpp"

namespace tagbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& ctx) {
  const char* c = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(c, &end);
  if (end == c || *end != '\0' || errno == ERANGE) {
    throw SchemaError(ctx + ": bad number '" + s + "'");
  }
  return v;
}

long parse_int(const std::string& s, const std::string& ctx) {
  const char* c = s.c_str();
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(c, &end, 10);
  if (end == c || *end != '\0' || errno == ERANGE) {
    throw SchemaError(ctx + ": bad integer '" + s + "'");
  }
  return v;
}

std::string loc(const std::string& file, size_t line) {
  return file + " line " + std::to_string(line);
}

const json& need(const json& j, const char* field, const std::string& ctx) {
  auto it = j.find(field);
  if (it == j.end()) {
    throw SchemaError(ctx + ": missing field '" + field + "'");
  }
  return *it;
}

json pose_to_json(const Pose& p) {
  const Quat& q = p.rotation();
  const Vec3& t = p.translation();
  return json{{"q", {q.w(), q.x(), q.y(), q.z()}},
              {"t", {t.x(), t.y(), t.z()}}};
}

Pose pose_from_json(const json& j, const std::string& ctx) {
  const auto& q = need(j, "q", ctx);
  const auto& t = need(j, "t", ctx);
  if (!q.is_array() || q.size() != 4 || !t.is_array() || t.size() != 3) {
    throw SchemaError(ctx + ": pose needs q[4] and t[3]");
  }
  const Quat quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                  q[3].get<double>());
  if (std::abs(quat.norm() - 1.0) > 1e-6) {
    throw SchemaError(ctx + ": quaternion is not unit length");
  }
  return Pose(quat, Vec3(t[0].get<double>(), t[1].get<double>(),
                         t[2].get<double>()));
}

json parse_json_file(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    return json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

}  // namespace

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_layout(const MarkerLayout& layout, const std::string& path) {
  json root;
  root["kind"] =
      layout.kind == LayoutKind::Nested ? "nested" : "non_nested";
  root["base_side"] = layout.base_side;
  json markers = json::array();
  for (const auto& m : layout.markers) {
    json jm;
    jm["id"] = m.id;
    jm["family"] = m.family == MarkerFamily::Custom52h12 ? "Custom52h12"
                                                         : "Standard36h11";
    jm["side"] = m.side;
    jm["pose"] = pose_to_json(m.pose);
    if (m.parent) {
      jm["parent"] = *m.parent;
    } else {
      jm["parent"] = nullptr;
    }
    markers.push_back(jm);
  }
  root["markers"] = markers;
  write_file(path, root.dump(2) + "\n");
}

MarkerLayout load_layout(const std::string& path) {
  const json root = parse_json_file(path);
  MarkerLayout layout;
  const std::string kind =
      need(root, "kind", path).get<std::string>();
  if (kind == "nested") {
    layout.kind = LayoutKind::Nested;
  } else if (kind == "non_nested") {
    layout.kind = LayoutKind::NonNested;
  } else {
    throw SchemaError(path + ": unknown kind '" + kind + "'");
  }
  layout.base_side = need(root, "base_side", path).get<double>();
  const auto& markers = need(root, "markers", path);
  if (!markers.is_array()) throw SchemaError(path + ": markers must be array");
  for (size_t i = 0; i < markers.size(); ++i) {
    const std::string ctx = path + " markers[" + std::to_string(i) + "]";
    const json& jm = markers[i];
    MarkerSpec m;
    m.id = need(jm, "id", ctx).get<int>();
    const std::string fam = need(jm, "family", ctx).get<std::string>();
    if (fam == "Standard36h11") {
      m.family = MarkerFamily::Standard36h11;
    } else if (fam == "Custom52h12") {
      m.family = MarkerFamily::Custom52h12;
    } else {
      throw SchemaError(ctx + ": unknown family '" + fam + "'");
    }
    m.side = need(jm, "side", ctx).get<double>();
    m.pose = pose_from_json(need(jm, "pose", ctx), ctx);
    const auto& parent = need(jm, "parent", ctx);
    if (!parent.is_null()) m.parent = parent.get<int>();
    layout.markers.push_back(m);
  }
  validate_layout(layout);
  return layout;
}

static const char* kTrajectoryHeader = "t,x,y,z,qw,qx,qy,qz";

void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ostringstream ss;
  ss << kTrajectoryHeader << '\n';
  for (const auto& s : traj) {
    const Vec3& t = s.pose.translation();
    const Quat& q = s.pose.rotation();
    ss << format_double(s.t) << ',' << format_double(t.x()) << ','
       << format_double(t.y()) << ',' << format_double(t.z()) << ','
       << format_double(q.w()) << ',' << format_double(q.x()) << ','
       << format_double(q.y()) << ',' << format_double(q.z()) << '\n';
  }
  write_file(path, ss.str());
}

Trajectory load_trajectory(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  size_t lineno = 0;
  if (!std::getline(in, line) || line != kTrajectoryHeader) {
    throw SchemaError(loc(path, 1) + ": expected header '" +
                      kTrajectoryHeader + "'");
  }
  lineno = 1;
  Trajectory traj;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) {
      throw SchemaError(loc(path, lineno) + ": expected 8 fields, got " +
                        std::to_string(f.size()));
    }
    const std::string ctx = loc(path, lineno);
    TimedPose s;
    s.t = parse_double(f[0], ctx + " field t");
    const Vec3 t(parse_double(f[1], ctx + " field x"),
                 parse_double(f[2], ctx + " field y"),
                 parse_double(f[3], ctx + " field z"));
    const Quat q(parse_double(f[4], ctx + " field qw"),
                 parse_double(f[5], ctx + " field qx"),
                 parse_double(f[6], ctx + " field qy"),
                 parse_double(f[7], ctx + " field qz"));
    if (std::abs(q.norm() - 1.0) > 1e-6) {
      throw SchemaError(ctx + ": quaternion is not unit length");
    }
    s.pose = Pose(q, t);
    if (!traj.empty() && s.t < traj.back().t) {
      throw SchemaError(ctx + ": timestamps must not decrease");
    }
    traj.push_back(s);
  }
  return traj;
}

static const char* kDetectionHeader =
    "t,frame,cam,marker_id,u0,v0,u1,v1,u2,v2,u3,v3";
static const char* kFeatureHeader = "frame,cam,feature_id,u,v";

std::string save_detection_log(const DetectionLog& log,
                               const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream det;
  det << kDetectionHeader << '\n';
  for (const auto& d : log.detections) {
    det << format_double(d.t) << ',' << d.frame << ',' << d.camera << ','
        << d.marker_id;
    for (const auto& c : d.corners) {
      det << ',' << format_double(c.x()) << ',' << format_double(c.y());
    }
    det << '\n';
  }
  std::ostringstream feat;
  feat << kFeatureHeader << '\n';
  for (const auto& f : log.features) {
    feat << f.frame << ',' << f.camera << ',' << f.feature_id << ','
         << format_double(f.pixel.x()) << ',' << format_double(f.pixel.y())
         << '\n';
  }
  const std::string det_path = (fs::path(dir) / "detections.csv").string();
  const std::string feat_path = (fs::path(dir) / "features.csv").string();
  write_file(det_path, det.str());
  write_file(feat_path, feat.str());

  json root;
  root["rig_hash"] = log.rig_hash;
  root["total_frames"] = log.total_frames;
  root["t0"] = log.t0;
  root["frame_rate"] = log.frame_rate;
  root["detections_csv"] = "detections.csv";
  root["features_csv"] = "features.csv";
  root["detections_sha256"] = sha256_hex(det.str());
  root["features_sha256"] = sha256_hex(feat.str());
  const std::string log_path = (fs::path(dir) / "log.json").string();
  write_file(log_path, root.dump(2) + "\n");
  return log_path;
}

DetectionLog load_detection_log(const std::string& log_json_path) {
  const json root = parse_json_file(log_json_path);
  const std::string ctx = log_json_path;
  DetectionLog log;
  log.rig_hash = need(root, "rig_hash", ctx).get<std::string>();
  log.total_frames = need(root, "total_frames", ctx).get<int>();
  log.t0 = need(root, "t0", ctx).get<double>();
  log.frame_rate = need(root, "frame_rate", ctx).get<double>();
  if (log.total_frames <= 0 || log.frame_rate <= 0) {
    throw SchemaError(ctx + ": total_frames and frame_rate must be positive");
  }

  const fs::path dir = fs::path(log_json_path).parent_path();
  const std::string det_path =
      (dir / need(root, "detections_csv", ctx).get<std::string>()).string();
  const std::string feat_path =
      (dir / need(root, "features_csv", ctx).get<std::string>()).string();

  const std::string det_bytes = read_file(det_path);
  if (sha256_hex(det_bytes) !=
      need(root, "detections_sha256", ctx).get<std::string>()) {
    throw HashMismatchError(det_path + ": content hash mismatch");
  }
  const std::string feat_bytes = read_file(feat_path);
  if (sha256_hex(feat_bytes) !=
      need(root, "features_sha256", ctx).get<std::string>()) {
    throw HashMismatchError(feat_path + ": content hash mismatch");
  }

  {
    std::istringstream in(det_bytes);
    std::string line;
    size_t lineno = 1;
    if (!std::getline(in, line) || line != kDetectionHeader) {
      throw SchemaError(loc(det_path, 1) + ": expected header '" +
                        kDetectionHeader + "'");
    }
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != 12) {
        throw SchemaError(loc(det_path, lineno) + ": expected 12 fields");
      }
      const std::string lctx = loc(det_path, lineno);
      Detection d;
      d.t = parse_double(f[0], lctx + " field t");
      d.frame = static_cast<int>(parse_int(f[1], lctx + " field frame"));
      d.camera = static_cast<int>(parse_int(f[2], lctx + " field cam"));
      d.marker_id =
          static_cast<int>(parse_int(f[3], lctx + " field marker_id"));
      if (d.frame < 0 || d.frame >= log.total_frames) {
        throw SchemaError(lctx + ": frame out of range");
      }
      if (d.camera < 0) throw SchemaError(lctx + ": negative camera");
      for (int k = 0; k < 4; ++k) {
        d.corners[k] =
            Vec2(parse_double(f[4 + 2 * k], lctx + " corner u"),
                 parse_double(f[5 + 2 * k], lctx + " corner v"));
      }
      log.detections.push_back(d);
    }
  }
  {
    std::istringstream in(feat_bytes);
    std::string line;
    size_t lineno = 1;
    if (!std::getline(in, line) || line != kFeatureHeader) {
      throw SchemaError(loc(feat_path, 1) + ": expected header '" +
                        kFeatureHeader + "'");
    }
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != 5) {
        throw SchemaError(loc(feat_path, lineno) + ": expected 5 fields");
      }
      const std::string lctx = loc(feat_path, lineno);
      FeatureObservation o;
      o.frame = static_cast<int>(parse_int(f[0], lctx + " field frame"));
      o.camera = static_cast<int>(parse_int(f[1], lctx + " field cam"));
      o.feature_id =
          static_cast<int>(parse_int(f[2], lctx + " field feature_id"));
      o.pixel = Vec2(parse_double(f[3], lctx + " field u"),
                     parse_double(f[4], lctx + " field v"));
      if (o.frame < 0 || o.frame >= log.total_frames) {
        throw SchemaError(lctx + ": frame out of range");
      }
      log.features.push_back(o);
    }
  }
  return log;
}

static json manifest_to_json(const RunManifest& m) {
  json root;
  root["version"] = m.version;
  root["seed"] = m.seed;
  root["layout_kind"] = m.layout_kind;
  root["base_side"] = m.base_side;
  root["profile"] = {{"hover_alt", m.profile.hover_alt},
                     {"traverse_dist", m.profile.traverse_dist},
                     {"speed", m.profile.speed},
                     {"climb_rate", m.profile.climb_rate},
                     {"pause", m.profile.pause},
                     {"frame_rate", m.profile.frame_rate},
                     {"fixed_yaw", m.profile.fixed_yaw}};
  root["visibility"] = {{"illumination", m.visibility.illumination},
                        {"pixel_noise_sigma", m.visibility.pixel_noise_sigma},
                        {"dropout_prob", m.visibility.dropout_prob},
                        {"min_illumination", m.visibility.min_illumination},
                        {"range_min_ratio", m.visibility.range_min_ratio},
                        {"range_max_ratio", m.visibility.range_max_ratio},
                        {"max_incidence_deg", m.visibility.max_incidence_deg}};
  root["sim"] = {{"feature_count", m.sim.feature_count},
                 {"runway",
                  {m.sim.runway_x_min, m.sim.runway_x_max, m.sim.runway_y_min,
                   m.sim.runway_y_max}},
                 {"layout_pose", pose_to_json(m.sim.layout_pose)}};
  root["mode"] = m.mode;
  root["stride"] = m.stride;
  root["min_feature_track"] = m.min_feature_track;
  root["input_hashes"] = m.input_hashes;
  return root;
}

std::string manifest_canonical_json(const RunManifest& m) {
  // nlohmann keeps object keys sorted, so dump() is canonical already.
  return manifest_to_json(m).dump(2) + "\n";
}

std::string manifest_hash(const RunManifest& m) {
  return sha256_hex(manifest_canonical_json(m));
}

void save_manifest(const RunManifest& m, const std::string& path) {
  write_file(path, manifest_canonical_json(m));
}

RunManifest load_manifest(const std::string& path) {
  const json root = parse_json_file(path);
  const std::string ctx = path;
  RunManifest m;
  m.version = need(root, "version", ctx).get<int>();
  if (m.version != 1) {
    throw SchemaError(ctx + ": unsupported manifest version " +
                      std::to_string(m.version));
  }
  m.seed = need(root, "seed", ctx).get<uint64_t>();
  m.layout_kind = need(root, "layout_kind", ctx).get<std::string>();
  if (m.layout_kind != "nested" && m.layout_kind != "non_nested") {
    throw SchemaError(ctx + ": unknown layout_kind '" + m.layout_kind + "'");
  }
  m.base_side = need(root, "base_side", ctx).get<double>();
  const json& p = need(root, "profile", ctx);
  m.profile.hover_alt = need(p, "hover_alt", ctx).get<double>();
  m.profile.traverse_dist = need(p, "traverse_dist", ctx).get<double>();
  m.profile.speed = need(p, "speed", ctx).get<double>();
  m.profile.climb_rate = need(p, "climb_rate", ctx).get<double>();
  m.profile.pause = need(p, "pause", ctx).get<double>();
  m.profile.frame_rate = need(p, "frame_rate", ctx).get<double>();
  m.profile.fixed_yaw = need(p, "fixed_yaw", ctx).get<bool>();
  const json& v = need(root, "visibility", ctx);
  m.visibility.illumination = need(v, "illumination", ctx).get<double>();
  m.visibility.pixel_noise_sigma =
      need(v, "pixel_noise_sigma", ctx).get<double>();
  m.visibility.dropout_prob = need(v, "dropout_prob", ctx).get<double>();
  m.visibility.min_illumination =
      need(v, "min_illumination", ctx).get<double>();
  m.visibility.range_min_ratio =
      need(v, "range_min_ratio", ctx).get<double>();
  m.visibility.range_max_ratio =
      need(v, "range_max_ratio", ctx).get<double>();
  m.visibility.max_incidence_deg =
      need(v, "max_incidence_deg", ctx).get<double>();
  const json& s = need(root, "sim", ctx);
  m.sim.feature_count = need(s, "feature_count", ctx).get<int>();
  const json& rw = need(s, "runway", ctx);
  if (!rw.is_array() || rw.size() != 4) {
    throw SchemaError(ctx + ": sim.runway must be [xmin,xmax,ymin,ymax]");
  }
  m.sim.runway_x_min = rw[0].get<double>();
  m.sim.runway_x_max = rw[1].get<double>();
  m.sim.runway_y_min = rw[2].get<double>();
  m.sim.runway_y_max = rw[3].get<double>();
  m.sim.layout_pose = pose_from_json(need(s, "layout_pose", ctx), ctx);
  m.mode = need(root, "mode", ctx).get<std::string>();
  if (m.mode != "marker" && m.mode != "marker+feature") {
    throw SchemaError(ctx + ": unknown mode '" + m.mode + "'");
  }
  m.stride = need(root, "stride", ctx).get<int>();
  m.min_feature_track = need(root, "min_feature_track", ctx).get<int>();
  m.input_hashes = need(root, "input_hashes", ctx)
                       .get<std::map<std::string, std::string>>();
  m.profile.validate();
  m.visibility.validate();
  return m;
}

void verify_manifest_inputs(const RunManifest& m,
                            const std::string& manifest_path) {
  const fs::path dir = fs::path(manifest_path).parent_path();
  for (const auto& [name, hash] : m.input_hashes) {
    const std::string path = (dir / name).string();
    const std::string actual = sha256_file_hex(path);
    if (actual != hash) {
      throw HashMismatchError(path + ": recorded " + hash + ", found " +
                              actual);
    }
  }
}

void save_slam_result(const SlamResult& result, const std::string& dir) {
  fs::create_directories(dir);
  Trajectory est;
  est.reserve(result.trajectory.size());
  for (const auto& [frame, pose] : result.trajectory) {
    est.push_back({result.frame_time(frame), pose});
  }
  save_trajectory(est, (fs::path(dir) / "estimate.csv").string());

  json root;
  root["availability"] = result.availability;
  root["n_estimated"] = result.n_estimated;
  root["n_total"] = result.n_total;
  root["final_cost"] = result.opt.final_cost;
  root["converged"] = result.opt.converged;
  root["iterations"] = result.opt.iterations;
  root["n_markers"] = result.marker_map.size();
  root["n_features"] = result.feature_map.size();
  write_file((fs::path(dir) / "result.json").string(), root.dump(2) + "\n");
}

static const char* kMetricsHeader =
    "trial,seed,mode,solved,ate_rmse,rpe_rmse,availability,n_estimated,"
    "n_total,final_cost,converged";

std::string metrics_csv(const std::vector<TrialMetrics>& rows) {
  std::ostringstream ss;
  ss << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    ss << r.trial << ',' << r.seed << ',' << r.mode << ','
       << (r.solved ? 1 : 0) << ',';
    if (r.solved) {
      ss << format_double(r.ate) << ',' << format_double(r.rpe);
    } else {
      ss << ',';
    }
    ss << ',' << format_double(r.avail) << ',' << r.n_estimated << ','
       << r.n_total << ',';
    if (r.solved) ss << format_double(r.final_cost);
    ss << ',' << (r.converged ? 1 : 0) << '\n';
  }
  return ss.str();
}

std::string metrics_table(const std::vector<TrialMetrics>& rows) {
  char buf[160];
  std::ostringstream ss;
  std::snprintf(buf, sizeof(buf), "%-6s %-16s %-10s %-10s %-12s %-10s\n",
                "trial", "mode", "ate[m]", "rpe[m]", "avail", "converged");
  ss << buf;
  ss << std::string(68, '-') << '\n';
  for (const auto& r : rows) {
    if (r.solved) {
      std::snprintf(buf, sizeof(buf),
                    "%-6d %-16s %-10.3f %-10.3f %-12.3f %-10s\n", r.trial,
                    r.mode.c_str(), r.ate, r.rpe, r.avail,
                    r.converged ? "yes" : "no");
    } else {
      std::snprintf(buf, sizeof(buf),
                    "%-6d %-16s %-10s %-10s %-12.3f %-10s\n", r.trial,
                    r.mode.c_str(), "-", "-", r.avail, "-");
    }
    ss << buf;
  }
  return ss.str();
}

}  // namespace tagbench
