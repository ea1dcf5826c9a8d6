#pragma once

#include <cstdint>
#include <vector>

#include "bpdl/rng.hpp"
#include "bpdl/torus.hpp"
#include "bpdl/vec.hpp"

namespace bpdl {

// Finite point configuration on a torus with a uniform cell grid for
// neighborhood queries.
//
// Points are addressed two ways: by slot (dense index 0..size), which moves
// when another point is removed, and by handle, a stable id never reused
// within the lifetime of the configuration. Rate caches in the simulator are
// slot-parallel arrays; handles are what events and cells refer to.
//
// The cell side is at least `interaction_range`, so a query radius up to that
// range touches only the 3^d neighborhood; larger radii scan more rings.
class PointConfig {
 public:
  static constexpr uint64_t kNoHandle = UINT64_MAX;

  struct Removal {
    uint32_t slot;        // slot that was vacated
    bool moved;           // whether the former last slot was moved into it
    uint64_t moved_handle;
  };

  PointConfig(const Torus& torus, double interaction_range);

  const Torus& torus() const { return torus_; }
  size_t size() const { return handle_of_slot_.size(); }
  bool empty() const { return handle_of_slot_.empty(); }

  uint64_t insert(Vec position);
  Removal remove(uint64_t handle);

  bool contains(uint64_t handle) const {
    return handle < slot_of_handle_.size() && slot_of_handle_[handle] >= 0;
  }
  uint32_t slot_of(uint64_t handle) const;
  uint64_t handle_at(uint32_t slot) const { return handle_of_slot_[slot]; }
  Vec position_at(uint32_t slot) const {
    return {coords_[3 * slot], coords_[3 * slot + 1], coords_[3 * slot + 2]};
  }
  Vec position_of(uint64_t handle) const { return position_at(slot_of(handle)); }

  // Visit every point at minimum-image distance <= radius from `center`,
  // except the one carrying `exclude`. The visitor receives
  // (slot, handle, displacement point-center, squared distance).
  // radius must not exceed half the torus side.
  template <typename Visitor>
  void for_neighbors(const Vec& center, double radius, uint64_t exclude,
                     Visitor&& visit) const;

  std::vector<uint64_t> neighbors_within(const Vec& center, double radius,
                                         uint64_t exclude = kNoHandle) const;
  // O(n) reference scan, kept as the oracle the cell list is tested against
  std::vector<uint64_t> neighbors_within_brute(const Vec& center, double radius,
                                               uint64_t exclude = kNoHandle) const;

  // exact count of points with lo[k] <= x[k] < hi[k]; window must lie in [0,L)^d
  int64_t window_count(const Vec& lo, const Vec& hi) const;

  double cell_side() const { return cell_side_; }
  int cells_per_side() const { return cells_per_side_; }
  uint64_t next_handle() const { return next_handle_; }

  // structural equality of the full index state, used by restoration tests
  bool index_equals(const PointConfig& other) const;

 private:
  int cell_index_of(const Vec& x) const;
  int linear_cell(int cx, int cy, int cz) const;

  Torus torus_;
  int cells_per_side_ = 1;
  double cell_side_ = 0.0;
  std::vector<double> coords_;             // 3 per slot
  std::vector<uint64_t> handle_of_slot_;
  std::vector<int64_t> slot_of_handle_;    // -1 once removed
  std::vector<int32_t> cell_of_slot_;
  std::vector<std::vector<uint64_t>> cells_;  // handles per cell
  uint64_t next_handle_ = 0;
};

// Homogeneous Poisson sample: count ~ Poisson(density * volume), positions
// independent and uniform.
PointConfig sample_poisson(double density, const Torus& torus, double interaction_range,
                           Rng& rng);

template <typename Visitor>
void PointConfig::for_neighbors(const Vec& center, double radius, uint64_t exclude,
                                Visitor&& visit) const {
  if (radius > torus_.half())
    throw std::invalid_argument("neighbor query radius exceeds half the torus side");
  if (radius < 0.0 || empty()) return;

  const double r2 = radius * radius;
  const int rings = cell_side_ > 0.0 ? static_cast<int>(std::ceil(radius / cell_side_)) : 0;
  const bool all_cells = 2 * rings + 1 >= cells_per_side_;

  const int ctr = cell_index_of(center);
  const int cps = cells_per_side_;
  int base[3] = {ctr % cps, (ctr / cps) % cps, ctr / (cps * cps)};

  const int lo = all_cells ? 0 : -rings;
  const int hi = all_cells ? cps - 1 : rings;

  auto scan_cell = [&](int lin) {
    for (uint64_t h : cells_[lin]) {
      if (h == exclude) continue;
      const uint32_t slot = static_cast<uint32_t>(slot_of_handle_[h]);
      const Vec disp = torus_.min_image(position_at(slot), center);
      const double d2 = norm2(disp);
      if (d2 <= r2) visit(slot, h, disp, d2);
    }
  };

  auto wrap_cell = [&](int base_c, int off) {
    if (all_cells) return off;
    int c = (base_c + off) % cps;
    return c < 0 ? c + cps : c;
  };

  const int dzl = torus_.dim >= 3 ? lo : 0, dzh = torus_.dim >= 3 ? hi : 0;
  const int dyl = torus_.dim >= 2 ? lo : 0, dyh = torus_.dim >= 2 ? hi : 0;
  for (int dz = dzl; dz <= dzh; ++dz) {
    const int cz = torus_.dim >= 3 ? wrap_cell(base[2], dz) : 0;
    for (int dy = dyl; dy <= dyh; ++dy) {
      const int cy = torus_.dim >= 2 ? wrap_cell(base[1], dy) : 0;
      for (int dx = lo; dx <= hi; ++dx) {
        scan_cell(linear_cell(wrap_cell(base[0], dx), cy, cz));
      }
    }
  }
}

}  // namespace bpdl
