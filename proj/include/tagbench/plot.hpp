#pragma once

// Minimal SVG rendering of trajectories, top-down (x/y) view.

#include <string>

#include "tagbench/flightsim.hpp"

namespace tagbench {

// Ground truth in gray, estimate in color, with axes and an ATE caption.
// The estimate is rigidly aligned to the ground truth first when both are
// non-degenerate; otherwise it is drawn as-is.
std::string render_trajectory_svg(const Trajectory& est, const Trajectory& gt);

}  // namespace tagbench
