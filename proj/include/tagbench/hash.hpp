#pragma once

// SHA-256 helpers for content addressing of run artifacts, plus the numeric
// formatting rule shared by every writer: 17 significant digits, enough for
// bit-exact double round-trips.

#include <cstdint>
#include <string>

namespace tagbench {

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::string& path);  // throws Error on I/O

// Shortest-faithful decimal form used in CSV and canonical hash inputs.
std::string format_double(double v);

// Cheap seed mixer for deriving per-trial RNG seeds.
uint64_t mix_seed(uint64_t seed, uint64_t salt);

}  // namespace tagbench
