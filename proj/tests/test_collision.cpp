#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle/collision_oracle.hpp"
#include "weft/collision.hpp"
#include "weft/mesh.hpp"

using namespace weft;

namespace {

CollisionSoup soup_from(const std::vector<std::array<int, 3>>& tris, int verts) {
  return CollisionSoup::build(tris, verts, std::vector<std::uint8_t>(static_cast<std::size_t>(verts), 1));
}

bool same_results(const NarrowPhaseResult& a, const NarrowPhaseResult& b) {
  if (a.impacts.size() != b.impacts.size()) return false;
  if (a.proximities.size() != b.proximities.size()) return false;
  for (std::size_t i = 0; i < a.impacts.size(); ++i) {
    const auto& x = a.impacts[i];
    const auto& y = b.impacts[i];
    if (x.kind != y.kind || x.a != y.a || x.b != y.b) return false;
    if (std::abs(x.toi - y.toi) > 1e-8) return false;
  }
  for (std::size_t i = 0; i < a.proximities.size(); ++i) {
    const auto& x = a.proximities[i];
    const auto& y = b.proximities[i];
    if (x.kind != y.kind || x.a != y.a || x.b != y.b) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("cubic root finder handles the degree ladder") {
  std::array<double, 3> roots{};
  // (t - 0.5)^3: a triple root is only locatable to ~cbrt(eval noise).
  CHECK(cubic_roots_in_unit_interval(1, -1.5, 0.75, -0.125, roots) == 1);
  CHECK(roots[0] == doctest::Approx(0.5).epsilon(1e-5));

  // Simple root: (t - 0.3)(t^2 + 1) has one sharp root at 0.3.
  CHECK(cubic_roots_in_unit_interval(1, -0.3, 1.0, -0.3, roots) == 1);
  CHECK(roots[0] == doctest::Approx(0.3).epsilon(1e-12));

  // (t-0.2)(t-0.5)(t-0.8) = t^3 - 1.5t^2 + 0.66t - 0.08
  CHECK(cubic_roots_in_unit_interval(1, -1.5, 0.66, -0.08, roots) == 3);
  CHECK(roots[0] == doctest::Approx(0.2).epsilon(1e-10));
  CHECK(roots[1] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(roots[2] == doctest::Approx(0.8).epsilon(1e-10));

  // Quadratic: (t-0.25)(t-0.75)
  CHECK(cubic_roots_in_unit_interval(0, 1, -1.0, 0.1875, roots) == 2);
  // Linear: 2t - 1
  CHECK(cubic_roots_in_unit_interval(0, 0, 2, -1, roots) == 1);
  CHECK(roots[0] == doctest::Approx(0.5));
  // No roots inside
  CHECK(cubic_roots_in_unit_interval(0, 0, 1, 5, roots) == 0);
  // Identically zero
  CHECK(cubic_roots_in_unit_interval(0, 0, 0, 0, roots) == -1);
}

TEST_CASE("vertex crossing a static unit triangle hits at t=0.5") {
  const Vec3 a(-1, -1, 0), b(2, -1, 0), c(0, 2, 0);
  const auto hit = ccd_vertex_face(Vec3(0, 0, 1), Vec3(0, 0, -1), a, a, b, b, c, c);
  REQUIRE(hit.has_value());
  CHECK(hit->toi == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(hit->normal.dot(Vec3(0, 0, 1)) > 0.99);  // oriented toward the vertex start side
}

TEST_CASE("parallel edges translating in parallel never impact") {
  const Vec3 p1(0, 0, 0), p2(1, 0, 0);
  const Vec3 q1(0, 1, 0.5), q2(1, 1, 0.5);
  const Vec3 shift(0.2, 0.3, 0.0);
  const auto hit = ccd_edge_edge(p1, p1 + shift, p2, p2 + shift, q1, q1 + shift, q2, q2 + shift);
  CHECK_FALSE(hit.has_value());
}

TEST_CASE("crossing edges impact at the expected time") {
  // Edge 1 fixed along x at z=0; edge 2 above it along y drops from z=1 to z=-1.
  const Vec3 p1(-1, 0, 0), p2(1, 0, 0);
  const Vec3 q1a(0, -1, 1), q2a(0, 1, 1);
  const Vec3 q1b(0, -1, -1), q2b(0, 1, -1);
  const auto hit = ccd_edge_edge(p1, p1, p2, p2, q1a, q1b, q2a, q2b);
  REQUIRE(hit.has_value());
  CHECK(hit->toi == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("DCD point-triangle distance and weights") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  const auto inside = dcd_vertex_face(Vec3(0.25, 0.25, 0.05), a, b, c, 0.1);
  REQUIRE(inside.has_value());
  CHECK(inside->gap == doctest::Approx(0.05));
  CHECK(inside->weights[1] == doctest::Approx(0.5));

  const auto outside = dcd_vertex_face(Vec3(0.25, 0.25, 0.2), a, b, c, 0.1);
  CHECK_FALSE(outside.has_value());

  const auto corner = dcd_vertex_face(Vec3(-0.03, -0.04, 0), a, b, c, 0.1);
  REQUIRE(corner.has_value());
  CHECK(corner->gap == doctest::Approx(0.05));
  CHECK(corner->weights[1] == doctest::Approx(1.0));
}

TEST_CASE("grid: one triangle in one cell, no pairs") {
  auto soup = soup_from({{0, 1, 2}}, 3);
  std::vector<Vec3> x = {Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0, 0.1, 0)};
  const auto built = build_grid(soup, x, x, CollisionMode::Discrete, CollisionParams{});
  CHECK(built.table.total == 0);
}

TEST_CASE("grid: two overlapping triangles give workload 1") {
  auto soup = soup_from({{0, 1, 2}, {3, 4, 5}}, 6);
  std::vector<Vec3> x = {Vec3(0, 0, 0),      Vec3(0.1, 0, 0), Vec3(0, 0.1, 0),
                         Vec3(0.01, 0.01, 0.01), Vec3(0.11, 0.01, 0.01), Vec3(0.01, 0.11, 0.01)};
  const auto built = build_grid(soup, x, x, CollisionMode::Discrete, CollisionParams{});
  std::int64_t max_count = 0;
  for (auto c : built.table.counts) max_count = std::max(max_count, c);
  CHECK(max_count == 1);
}

TEST_CASE("workload table matches a brute-force recount on a random cloud") {
  oracle::Rng rng(41);
  std::vector<std::array<int, 3>> tris;
  std::vector<Vec3> x;
  for (int t = 0; t < 100; ++t) {
    const Vec3 base = rng.vec3(-0.5, 0.5);
    x.push_back(base);
    x.push_back(base + rng.vec3(-0.06, 0.06));
    x.push_back(base + rng.vec3(-0.06, 0.06));
    tris.push_back({3 * t, 3 * t + 1, 3 * t + 2});
  }
  auto soup = soup_from(tris, 300);
  const auto built = build_grid(soup, x, x, CollisionMode::Discrete, CollisionParams{});
  CHECK(oracle::recount_pairs(built.grid) == built.table.total);
  for (std::size_t c = 0; c < built.table.counts.size(); ++c) {
    CHECK(built.table.prefix[c + 1] - built.table.prefix[c] == built.table.counts[c]);
  }
}

TEST_CASE("split_workload hands out near-equal contiguous ranges") {
  WorkloadTable table;
  table.total = 10;
  SUBCASE("even split") {
    const auto r = split_workload(table, 2);
    CHECK(r[0].begin == 0);
    CHECK(r[0].end == 5);
    CHECK(r[1].begin == 5);
    CHECK(r[1].end == 10);
  }
  SUBCASE("uneven split") {
    const auto r = split_workload(table, 4);
    std::vector<std::int64_t> sizes;
    for (const auto& range : r) sizes.push_back(range.end - range.begin);
    CHECK(sizes == std::vector<std::int64_t>{3, 3, 2, 2});
  }
}

TEST_CASE("adversarial hot cell is split mid-cell across all devices") {
  // Ten nearly coincident triangles parked mid-cell: exactly one occupied
  // cell carrying all 45 pair tests.
  std::vector<std::array<int, 3>> tris;
  std::vector<Vec3> x;
  oracle::Rng rng(42);
  for (int t = 0; t < 10; ++t) {
    const Vec3 jitter = rng.vec3(-1e-4, 1e-4);
    x.push_back(Vec3(0.04, 0.04, 0.04) + jitter);
    x.push_back(Vec3(0.09, 0.04, 0.04) + jitter);
    x.push_back(Vec3(0.04, 0.09, 0.04) + jitter);
    tris.push_back({3 * t, 3 * t + 1, 3 * t + 2});
  }
  auto soup = soup_from(tris, 30);
  const auto built = build_grid(soup, x, x, CollisionMode::Discrete, CollisionParams{});

  REQUIRE(built.table.counts.size() == 1);
  std::int64_t hottest = 0;
  for (auto c : built.table.counts) hottest = std::max(hottest, c);
  CHECK(hottest == 45);

  const auto ranges = split_workload(built.table, 4);
  std::vector<std::int64_t> sizes;
  for (const auto& r : ranges) sizes.push_back(r.end - r.begin);
  std::int64_t lo = *std::min_element(sizes.begin(), sizes.end());
  std::int64_t hi = *std::max_element(sizes.begin(), sizes.end());
  CHECK(hi - lo <= 1);

  // All four devices carve out a piece of the hot cell's pair range.
  std::size_t hot_cell = 0;
  for (std::size_t c = 0; c < built.table.counts.size(); ++c) {
    if (built.table.counts[c] == hottest) hot_cell = c;
  }
  const std::int64_t cell_begin = built.table.prefix[hot_cell];
  const std::int64_t cell_end = built.table.prefix[hot_cell + 1];
  int devices_in_cell = 0;
  for (const auto& r : ranges) {
    devices_in_cell += (std::max(r.begin, cell_begin) < std::min(r.end, cell_end)) ? 1 : 0;
  }
  CHECK(devices_in_cell == 4);
}

TEST_CASE("merged results are identical for n in {1,2,4} and match brute force") {
  oracle::Rng rng(43);
  for (int trial = 0; trial < 6; ++trial) {
    const auto scene = oracle::random_two_cloth_scene(rng, 8);
    CollisionParams params;
    params.thickness = 0.01;

    for (CollisionMode mode : {CollisionMode::Continuous, CollisionMode::Discrete}) {
      const auto brute = oracle::brute_force_collide(scene.soup, scene.x_begin, scene.x_end, mode, params);
      std::vector<NarrowPhaseResult> runs;
      for (int n : {1, 2, 4}) {
        Engine engine(n);
        runs.push_back(collide(engine, scene.soup, scene.x_begin, scene.x_end, mode, params));
      }
      CAPTURE(trial);
      CAPTURE(mode == CollisionMode::Continuous ? "ccd" : "dcd");
      CHECK(same_results(runs[0], brute));
      CHECK(same_results(runs[1], brute));
      CHECK(same_results(runs[2], brute));
    }
  }
}

TEST_CASE("every brute-force impact pair co-occupies a grid cell") {
  oracle::Rng rng(44);
  const auto scene = oracle::random_two_cloth_scene(rng, 8);
  const auto built = build_grid(scene.soup, scene.x_begin, scene.x_end, CollisionMode::Continuous,
                                CollisionParams{});
  const auto brute = oracle::brute_force_collide(scene.soup, scene.x_begin, scene.x_end,
                                                 CollisionMode::Continuous, CollisionParams{});
  CHECK(oracle::count_uncovered_impacts(brute, scene.soup, built.grid) == 0);
}

TEST_CASE("sync_shared_cells drops duplicates and keeps singletons") {
  NarrowPhaseResult a, b;
  Impact i1{FeatureKind::VertexFace, 3, 7, 0.25, Vec3(0, 0, 1), {1, 0.2, 0.3, 0.5}};
  Impact i2{FeatureKind::EdgeEdge, 1, 9, 0.5, Vec3(0, 1, 0), {0.5, 0.5, 0.5, 0.5}};
  a.impacts = {i1};
  b.impacts = {i1, i2};  // i1 duplicated across devices
  std::vector<NarrowPhaseResult> both;
  both.push_back(a);
  both.push_back(b);
  const auto merged = sync_shared_cells(std::move(both));
  CHECK(merged.impacts.size() == 2);

  std::vector<NarrowPhaseResult> single;
  single.push_back(a);
  const auto identity = sync_shared_cells(std::move(single));
  CHECK(identity.impacts.size() == 1);
}

TEST_CASE("immovable-only pairs are skipped") {
  std::vector<std::array<int, 3>> tris = {{0, 1, 2}, {3, 4, 5}};
  std::vector<std::uint8_t> movable(6, 0);  // everything is obstacle
  auto soup = CollisionSoup::build(tris, 6, movable);
  std::vector<Vec3> x = {Vec3(0, 0, 0),       Vec3(0.1, 0, 0),     Vec3(0, 0.1, 0),
                         Vec3(0.02, 0.02, 0.001), Vec3(0.12, 0.02, 0.001), Vec3(0.02, 0.12, 0.001)};
  Engine engine(1);
  const auto result = collide(engine, soup, x, x, CollisionMode::Discrete, CollisionParams{});
  CHECK(result.proximities.empty());
}
