#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "bpdl/point_config.hpp"

namespace bpdl {

// %.17g: enough digits that text -> double -> text is the identity
std::string fmt17(double v);

// Snapshot file: one header line "d L count time seed", then one row of d
// coordinates per point, 17 significant digits. Round-trips bit-exactly.
void write_snapshot(const std::filesystem::path& path, const PointConfig& config,
                    double time, uint64_t seed);

struct LoadedSnapshot {
  PointConfig config;
  double time;
  uint64_t seed;
};

LoadedSnapshot read_snapshot(const std::filesystem::path& path, double interaction_range);

// FNV-1a over file bytes, for the output manifest
uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string fnv1a64_hex(const std::filesystem::path& path);

}  // namespace bpdl
