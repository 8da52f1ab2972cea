#pragma once

// Fiducial marker layouts on the landing pad.
//
// Two kinds are generated:
//  * NonNested: twenty Standard36h11 markers in three scales with side ratio
//    1:5:28, partitioned 15/4/1 by default. The single large marker sits at
//    the pad center, the mediums near the TLOF corners, the smalls evenly
//    spaced along the TLOF border.
//  * Nested: three concentric Custom52h12 markers with side ratio 1:4:30,
//    each smaller marker contained in the next larger one.
//
// Marker frames: origin at the marker center, z out of the printed face.
// Corner order is top-left, top-right, bottom-right, bottom-left, where
// "top" is -y of the marker frame; the order is counter-clockwise when
// viewed from +z.

#include <array>
#include <optional>
#include <vector>

#include "tagbench/geometry.hpp"

namespace tagbench {

enum class MarkerFamily { Standard36h11, Custom52h12 };

struct MarkerSpec {
  int id = 0;
  MarkerFamily family = MarkerFamily::Standard36h11;
  double side = 0;              // edge length in meters
  Pose pose;                    // marker frame in the layout frame
  std::optional<int> parent;    // enclosing marker for nested layouts
};

enum class LayoutKind { NonNested, Nested };

struct MarkerLayout {
  LayoutKind kind = LayoutKind::NonNested;
  double base_side = 1.0;       // side of the largest marker, meters
  std::vector<MarkerSpec> markers;

  const MarkerSpec* find(int id) const;
  const MarkerSpec& at(int id) const;  // throws Error if absent
};

// Marker counts per scale, smallest first. Must be positive in every slot
// (three scales in use) and total twenty.
struct ScalePartition {
  int small = 15;
  int medium = 4;
  int large = 1;
};

// Side ratios 1:5:28 relative to base_side/28. Ids are seed_id, seed_id+1,
// ... in order large, medium, small.
MarkerLayout generate_non_nested(double base_side, int seed_id,
                                 const ScalePartition& partition = {});

// Side ratios 1:4:30 relative to base_side/30, all concentric at the layout
// origin, child linked to its enclosing parent.
MarkerLayout generate_nested(double base_side, int seed_id);

// Corner positions in the marker's own frame (z = 0 plane).
std::array<Vec3, 4> marker_corners_local(double side);

// Corner positions in the layout frame. Throws Error for an unknown id.
std::array<Vec3, 4> marker_corners_world(const MarkerLayout& layout, int id);

// Checks the layout invariants: unique ids, positive sides, exactly the
// advertised scale ratios, markers flat in the z = 0 plane, no overlap of
// non-nested footprints, strict containment of nested children.
// Throws Error with a description on the first violation.
void validate_layout(const MarkerLayout& layout);

}  // namespace tagbench
