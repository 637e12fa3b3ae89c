#pragma once

#include <cstdint>
#include <random>

namespace betamon {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the independent substream `index` under `master`. Replication i
/// always draws from the same substream, whatever thread runs it.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t index) {
  return Rng(substream_seed(master, index));
}

/// Exact Beta(a, b) draw from two gamma variates.
inline double beta_draw(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  for (;;) {
    const double x = ga(rng);
    const double y = gb(rng);
    const double s = x + y;
    if (s > 0.0) {
      const double v = x / s;
      if (v > 0.0 && v < 1.0) return v;
    }
  }
}

}  // namespace betamon
