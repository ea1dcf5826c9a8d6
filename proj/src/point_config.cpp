#include "bpdl/point_config.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bpdl {

PointConfig::PointConfig(const Torus& torus, double interaction_range) : torus_(torus) {
  if (interaction_range < 0.0)
    throw std::invalid_argument("interaction range must be nonnegative");
  if (interaction_range > 0.0 && torus.side <= 2.0 * interaction_range)
    throw std::invalid_argument(
        "torus side must exceed twice the interaction range (minimum image)");
  cells_per_side_ =
      interaction_range > 0.0
          ? std::max(1, static_cast<int>(std::floor(torus.side / interaction_range)))
          : 1;
  cell_side_ = torus.side / cells_per_side_;
  int total = 1;
  for (int k = 0; k < torus_.dim; ++k) total *= cells_per_side_;
  cells_.resize(total);
}

int PointConfig::linear_cell(int cx, int cy, int cz) const {
  switch (torus_.dim) {
    case 1: return cx;
    case 2: return cy * cells_per_side_ + cx;
    default: return (cz * cells_per_side_ + cy) * cells_per_side_ + cx;
  }
}

int PointConfig::cell_index_of(const Vec& x) const {
  const Vec w = torus_.wrap(x);
  int c[3] = {0, 0, 0};
  for (int k = 0; k < torus_.dim; ++k) {
    int idx = static_cast<int>(w[k] / cell_side_);
    if (idx >= cells_per_side_) idx = cells_per_side_ - 1;
    c[k] = idx;
  }
  return linear_cell(c[0], c[1], c[2]);
}

uint32_t PointConfig::slot_of(uint64_t handle) const {
  if (!contains(handle)) throw std::out_of_range("unknown point handle");
  return static_cast<uint32_t>(slot_of_handle_[handle]);
}

uint64_t PointConfig::insert(Vec position) {
  const Vec pos = torus_.wrap(position);
  const uint64_t handle = next_handle_++;
  const uint32_t slot = static_cast<uint32_t>(handle_of_slot_.size());

  coords_.insert(coords_.end(), {pos[0], pos[1], pos[2]});
  handle_of_slot_.push_back(handle);
  slot_of_handle_.push_back(static_cast<int64_t>(slot));

  const int cell = cell_index_of(pos);
  cell_of_slot_.push_back(cell);
  cells_[cell].push_back(handle);
  return handle;
}

PointConfig::Removal PointConfig::remove(uint64_t handle) {
  const uint32_t slot = slot_of(handle);
  const uint32_t last = static_cast<uint32_t>(handle_of_slot_.size() - 1);

  // drop the handle from its cell
  auto& bucket = cells_[cell_of_slot_[slot]];
  auto it = std::find(bucket.begin(), bucket.end(), handle);
  *it = bucket.back();
  bucket.pop_back();

  Removal rec{slot, false, kNoHandle};
  slot_of_handle_[handle] = -1;

  if (slot != last) {
    const uint64_t moved = handle_of_slot_[last];
    for (int k = 0; k < 3; ++k) coords_[3 * slot + k] = coords_[3 * last + k];
    handle_of_slot_[slot] = moved;
    cell_of_slot_[slot] = cell_of_slot_[last];
    slot_of_handle_[moved] = static_cast<int64_t>(slot);
    rec.moved = true;
    rec.moved_handle = moved;
  }
  coords_.resize(3 * last);
  handle_of_slot_.pop_back();
  cell_of_slot_.pop_back();
  return rec;
}

std::vector<uint64_t> PointConfig::neighbors_within(const Vec& center, double radius,
                                                    uint64_t exclude) const {
  std::vector<uint64_t> out;
  for_neighbors(center, radius, exclude,
                [&](uint32_t, uint64_t h, const Vec&, double) { out.push_back(h); });
  return out;
}

std::vector<uint64_t> PointConfig::neighbors_within_brute(const Vec& center, double radius,
                                                          uint64_t exclude) const {
  if (radius > torus_.half())
    throw std::invalid_argument("neighbor query radius exceeds half the torus side");
  std::vector<uint64_t> out;
  const double r2 = radius * radius;
  for (uint32_t slot = 0; slot < size(); ++slot) {
    const uint64_t h = handle_of_slot_[slot];
    if (h == exclude) continue;
    if (torus_.distance2(position_at(slot), center) <= r2) out.push_back(h);
  }
  return out;
}

int64_t PointConfig::window_count(const Vec& lo, const Vec& hi) const {
  for (int k = 0; k < torus_.dim; ++k) {
    if (lo[k] < 0.0 || hi[k] > torus_.side || lo[k] > hi[k])
      throw std::invalid_argument("window must lie inside the fundamental domain");
  }
  int64_t count = 0;
  for (uint32_t slot = 0; slot < size(); ++slot) {
    bool inside = true;
    for (int k = 0; k < torus_.dim; ++k) {
      const double c = coords_[3 * slot + k];
      if (c < lo[k] || c >= hi[k]) {
        inside = false;
        break;
      }
    }
    count += inside;
  }
  return count;
}

bool PointConfig::index_equals(const PointConfig& other) const {
  if (coords_ != other.coords_ || handle_of_slot_ != other.handle_of_slot_ ||
      slot_of_handle_ != other.slot_of_handle_ || cell_of_slot_ != other.cell_of_slot_)
    return false;
  return cells_ == other.cells_ && next_handle_ == other.next_handle_;
}

PointConfig sample_poisson(double density, const Torus& torus, double interaction_range,
                           Rng& rng) {
  if (density < 0.0) throw std::invalid_argument("density must be nonnegative");
  PointConfig config(torus, interaction_range);
  const uint64_t count = rng.poisson(density * torus.volume());
  for (uint64_t i = 0; i < count; ++i) {
    Vec x{0.0, 0.0, 0.0};
    for (int k = 0; k < torus.dim; ++k) x[k] = torus.side * rng.uniform();
    config.insert(x);
  }
  return config;
}

}  // namespace bpdl
