#pragma once

// Independent reference implementations used by tests and the `verify`
// subcommand. Nothing here is called from the engine itself: every routine
// recomputes its answer by brute force (dense algebra, exhaustive
// enumeration, finite differences) so that it can stand as an oracle
// against the optimized paths.

#include "weft/common.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace weft::oracle {

/// Deterministic RNG wrapper: draws are reduced from raw 64-bit output so
/// sequences do not depend on the standard library's distribution details.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  Vec3 vec3(double lo, double hi) {
    const double x = uniform(lo, hi);
    const double y = uniform(lo, hi);
    const double z = uniform(lo, hi);
    return {x, y, z};
  }

  std::uint64_t raw() { return gen_(); }

private:
  std::mt19937_64 gen_;
};

}  // namespace weft::oracle
