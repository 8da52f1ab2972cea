#pragma once

#include <stdexcept>
#include <string>

namespace tagbench {

// Base class for everything thrown on purpose by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Geometry: point at or behind the camera plane during projection.
struct BehindCameraError : Error {
  using Error::Error;
};

// Geometry: SO(3) log at rotation angle pi, where the axis is ambiguous.
struct DegenerateAngleError : Error {
  using Error::Error;
};

// PnP: correspondence set admits no unique homography (collinear points,
// duplicate points, fewer than four correspondences).
struct DegenerateConfigError : Error {
  using Error::Error;
};

// Iterative solver left the basin: repeated rejected steps.
struct DivergenceError : Error {
  using Error::Error;
};

// Input file violates a pinned schema. Carries location context in what().
struct SchemaError : Error {
  using Error::Error;
};

// Recorded hash does not match the bytes on disk.
struct HashMismatchError : Error {
  using Error::Error;
};

}  // namespace tagbench
