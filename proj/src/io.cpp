#include "bpdl/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bpdl {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_snapshot(const std::filesystem::path& path, const PointConfig& config,
                    double time, uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open snapshot file for writing: " + path.string());
  const Torus& t = config.torus();
  out << t.dim << ' ' << fmt17(t.side) << ' ' << config.size() << ' ' << fmt17(time) << ' '
      << seed << '\n';
  for (uint32_t slot = 0; slot < config.size(); ++slot) {
    const Vec x = config.position_at(slot);
    for (int k = 0; k < t.dim; ++k) {
      if (k) out << ' ';
      out << fmt17(x[k]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("snapshot write failed: " + path.string());
}

LoadedSnapshot read_snapshot(const std::filesystem::path& path, double interaction_range) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open snapshot file: " + path.string());
  int dim = 0;
  double side = 0.0, time = 0.0;
  uint64_t count = 0, seed = 0;
  if (!(in >> dim >> side >> count >> time >> seed))
    throw std::runtime_error("malformed snapshot header: " + path.string());

  PointConfig config(Torus(dim, side), interaction_range);
  for (uint64_t i = 0; i < count; ++i) {
    Vec x{0.0, 0.0, 0.0};
    for (int k = 0; k < dim; ++k) {
      if (!(in >> x[k]))
        throw std::runtime_error("snapshot truncated: " + path.string());
    }
    config.insert(x);
  }
  return {std::move(config), time, seed};
}

uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string fnv1a64_hex(const std::filesystem::path& path) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64_file(path));
  return buf;
}

}  // namespace bpdl
