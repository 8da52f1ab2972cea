#include "tagbench/layout.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace tagbench {

namespace {
constexpr double kPi = 3.14159265358979323846;

Pose flat_pose(double x, double y, double yaw = 0) {
  return Pose(Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())), Vec3(x, y, 0));
}

// Point on the TLOF border square of half-side h, walked counter-clockwise
// from the corner (-h, -h); s in [0, 8h).
Vec2 perimeter_point(double h, double s) {
  const double edge = 2.0 * h;
  const int k = static_cast<int>(std::floor(s / edge)) % 4;
  const double u = s - k * edge;
  switch (k) {
    case 0: return Vec2(-h + u, -h);
    case 1: return Vec2(h, -h + u);
    case 2: return Vec2(h - u, h);
    default: return Vec2(-h, h - u);
  }
}

// Separating axis test for two squares in the z = 0 plane.
bool squares_overlap(const MarkerSpec& a, const MarkerSpec& b) {
  auto corners2d = [](const MarkerSpec& m) {
    std::array<Vec2, 4> out;
    auto local = marker_corners_local(m.side);
    for (int i = 0; i < 4; ++i) out[i] = (m.pose * local[i]).head<2>();
    return out;
  };
  const auto ca = corners2d(a);
  const auto cb = corners2d(b);

  auto separated_on = [&](const Vec2& axis) {
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (const auto& p : ca) {
      const double v = axis.dot(p);
      amin = std::min(amin, v);
      amax = std::max(amax, v);
    }
    for (const auto& p : cb) {
      const double v = axis.dot(p);
      bmin = std::min(bmin, v);
      bmax = std::max(bmax, v);
    }
    return amax < bmin || bmax < amin;
  };

  for (const auto& corners : {ca, cb}) {
    for (int i = 0; i < 4; ++i) {
      const Vec2 e = corners[(i + 1) % 4] - corners[i];
      if (separated_on(Vec2(-e.y(), e.x()))) return false;
    }
  }
  return true;
}

}  // namespace

const MarkerSpec* MarkerLayout::find(int id) const {
  for (const auto& m : markers) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

const MarkerSpec& MarkerLayout::at(int id) const {
  const MarkerSpec* m = find(id);
  if (!m) throw Error("layout: unknown marker id " + std::to_string(id));
  return *m;
}

MarkerLayout generate_non_nested(double base_side, int seed_id,
                                 const ScalePartition& partition) {
  if (base_side <= 0) throw Error("generate_non_nested: base_side must be > 0");
  if (partition.small <= 0 || partition.medium <= 0 || partition.large <= 0) {
    throw Error("generate_non_nested: every scale needs at least one marker");
  }
  if (partition.small + partition.medium + partition.large != 20) {
    throw Error("generate_non_nested: partition must total 20 markers");
  }

  const double s_large = base_side;
  const double s_medium = base_side * 5.0 / 28.0;
  const double s_small = base_side / 28.0;
  const double tlof_half = base_side;  // TLOF square [-base, base]^2

  MarkerLayout layout;
  layout.kind = LayoutKind::NonNested;
  layout.base_side = base_side;
  int next_id = seed_id;

  auto add = [&](double side, double x, double y) {
    MarkerSpec m;
    m.id = next_id++;
    m.family = MarkerFamily::Standard36h11;
    m.side = side;
    m.pose = flat_pose(x, y);
    layout.markers.push_back(m);
  };

  // Large markers: the single default sits at the pad center; additional
  // ones fan out along x with clear spacing.
  for (int i = 0; i < partition.large; ++i) {
    const double x = (i - (partition.large - 1) / 2.0) * 1.5 * s_large;
    add(s_large, x, 0);
  }

  // Medium markers near the TLOF corners, inset one medium side so the
  // border stays free for the small ring. Off-diagonal angles (partitions
  // with != 4 mediums) get their radius clamped so the axis-aligned square
  // keeps one small side of clearance from the border band.
  const double c = tlof_half - s_medium;
  const double ring_r = std::sqrt(2.0) * c;
  const double border_clear = tlof_half - s_small - s_medium / 2.0;
  for (int i = 0; i < partition.medium; ++i) {
    const double ang = kPi / 4.0 + i * 2.0 * kPi / partition.medium;
    const double reach = std::max(std::abs(std::cos(ang)), std::abs(std::sin(ang)));
    const double r = std::min(ring_r, border_clear / reach);
    add(s_medium, r * std::cos(ang), r * std::sin(ang));
  }

  // Small markers evenly spaced along the TLOF border.
  const double per = 8.0 * tlof_half;
  for (int i = 0; i < partition.small; ++i) {
    const Vec2 p = perimeter_point(tlof_half, (i + 0.5) * per / partition.small);
    add(s_small, p.x(), p.y());
  }

  validate_layout(layout);
  return layout;
}

MarkerLayout generate_nested(double base_side, int seed_id) {
  if (base_side <= 0) throw Error("generate_nested: base_side must be > 0");

  MarkerLayout layout;
  layout.kind = LayoutKind::Nested;
  layout.base_side = base_side;

  const double sides[3] = {base_side, base_side * 4.0 / 30.0,
                           base_side / 30.0};
  for (int i = 0; i < 3; ++i) {
    MarkerSpec m;
    m.id = seed_id + i;
    m.family = MarkerFamily::Custom52h12;
    m.side = sides[i];
    m.pose = flat_pose(0, 0);
    if (i > 0) m.parent = seed_id + i - 1;
    layout.markers.push_back(m);
  }

  validate_layout(layout);
  return layout;
}

std::array<Vec3, 4> marker_corners_local(double side) {
  const double h = side / 2.0;
  // TL, TR, BR, BL with "top" at -y; counter-clockwise seen from +z.
  return {Vec3(-h, -h, 0), Vec3(h, -h, 0), Vec3(h, h, 0), Vec3(-h, h, 0)};
}

std::array<Vec3, 4> marker_corners_world(const MarkerLayout& layout, int id) {
  const MarkerSpec& m = layout.at(id);
  auto local = marker_corners_local(m.side);
  std::array<Vec3, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = m.pose * local[i];
  return out;
}

void validate_layout(const MarkerLayout& layout) {
  if (layout.markers.empty()) throw Error("layout: no markers");
  if (layout.base_side <= 0) throw Error("layout: base_side must be > 0");

  std::set<int> ids;
  double max_side = 0;
  for (const auto& m : layout.markers) {
    if (!ids.insert(m.id).second) {
      throw Error("layout: duplicate marker id " + std::to_string(m.id));
    }
    if (m.side <= 0) {
      throw Error("layout: non-positive side on marker " + std::to_string(m.id));
    }
    max_side = std::max(max_side, m.side);

    // Flat on the pad: the marker normal must be the layout +z axis.
    const Vec3 n = m.pose.rotation() * Vec3::UnitZ();
    if ((n - Vec3::UnitZ()).norm() > 1e-9 ||
        std::abs(m.pose.translation().z()) > 1e-9) {
      throw Error("layout: marker " + std::to_string(m.id) +
                  " is not in the z = 0 plane");
    }
    if (m.parent) {
      const MarkerSpec* p = layout.find(*m.parent);
      if (!p) {
        throw Error("layout: marker " + std::to_string(m.id) +
                    " references missing parent");
      }
      if (p->side <= m.side) {
        throw Error("layout: parent of marker " + std::to_string(m.id) +
                    " is not larger");
      }
    }
  }
  if (std::abs(max_side - layout.base_side) > 1e-9 * layout.base_side) {
    throw Error("layout: base_side does not match the largest marker");
  }

  // Expected scale set, smallest to largest.
  const std::set<int> scale_sets[2] = {{1, 5, 28}, {1, 4, 30}};
  const auto& ratios =
      scale_sets[layout.kind == LayoutKind::Nested ? 1 : 0];
  const double unit = layout.base_side / *ratios.rbegin();
  for (const auto& m : layout.markers) {
    bool matched = false;
    for (int r : ratios) {
      if (std::abs(m.side - r * unit) <= 1e-9 * layout.base_side) {
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw Error("layout: marker " + std::to_string(m.id) +
                  " side breaks the scale ratio");
    }
  }

  if (layout.kind == LayoutKind::NonNested) {
    if (layout.markers.size() != 20) {
      throw Error("layout: non-nested layout must hold 20 markers");
    }
    for (size_t i = 0; i < layout.markers.size(); ++i) {
      for (size_t j = i + 1; j < layout.markers.size(); ++j) {
        if (squares_overlap(layout.markers[i], layout.markers[j])) {
          throw Error("layout: markers " +
                      std::to_string(layout.markers[i].id) + " and " +
                      std::to_string(layout.markers[j].id) + " overlap");
        }
      }
    }
  } else {
    if (layout.markers.size() != 3) {
      throw Error("layout: nested layout must hold 3 markers");
    }
    // Child corners strictly inside the parent's footprint.
    for (const auto& m : layout.markers) {
      if (!m.parent) continue;
      const MarkerSpec& p = layout.at(*m.parent);
      const Pose child_in_parent = p.pose.inverse() * m.pose;
      const double ph = p.side / 2.0;
      for (const auto& c : marker_corners_local(m.side)) {
        const Vec3 q = child_in_parent * c;
        if (std::abs(q.x()) >= ph || std::abs(q.y()) >= ph) {
          throw Error("layout: marker " + std::to_string(m.id) +
                      " not contained in its parent");
        }
      }
    }
  }
}

}  // namespace tagbench
