#pragma once

#include "oracle/oracle.hpp"
#include "weft/collision.hpp"

namespace weft::oracle {

/// Brute-force all-pairs collision: every triangle pair whose query boxes
/// overlap gets the full feature-test battery, no grid, no distribution.
/// Uses the same elementary kernels as the pipeline so the sets must match
/// exactly when the broad phase is correct.
NarrowPhaseResult brute_force_collide(const CollisionSoup& soup, std::span<const Vec3> x_begin,
                                      std::span<const Vec3> x_end, CollisionMode mode,
                                      const CollisionParams& params);

/// Checks that every brute-force impact pair shares at least one grid cell
/// (swept-AABB conservativeness). Returns the number of violations.
int count_uncovered_impacts(const NarrowPhaseResult& brute, const CollisionSoup& soup,
                            const HashGrid& grid);

/// Re-counts the workload table from the grid by brute force.
std::int64_t recount_pairs(const HashGrid& grid);

/// Random "two cloth patches approaching" scene for CCD equivalence runs.
struct RandomScene {
  CollisionSoup soup;
  std::vector<Vec3> x_begin, x_end;
};
RandomScene random_two_cloth_scene(Rng& rng, int max_side);

}  // namespace weft::oracle
