#include "oracle/collision_oracle.hpp"

#include "weft/mesh.hpp"

#include <map>

namespace weft::oracle {

namespace {

struct Box {
  Vec3 lo = Vec3::Constant(1e300);
  Vec3 hi = Vec3::Constant(-1e300);
  void include(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool overlaps(const Box& o) const {
    return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all();
  }
};

Box query_box(const CollisionSoup& soup, std::span<const Vec3> x0, std::span<const Vec3> x1, int tri,
              CollisionMode mode, double inflate) {
  Box b;
  for (int v : soup.triangles[static_cast<std::size_t>(tri)]) {
    b.include(x0[static_cast<std::size_t>(v)]);
    if (mode == CollisionMode::Continuous) b.include(x1[static_cast<std::size_t>(v)]);
  }
  b.lo -= Vec3::Constant(inflate);
  b.hi += Vec3::Constant(inflate);
  return b;
}

}  // namespace

NarrowPhaseResult brute_force_collide(const CollisionSoup& soup, std::span<const Vec3> x_begin,
                                      std::span<const Vec3> x_end, CollisionMode mode,
                                      const CollisionParams& params) {
  const int t = static_cast<int>(soup.triangles.size());
  const double inflate = mode == CollisionMode::Discrete ? 0.5 * params.thickness : 0.0;
  std::vector<Box> boxes;
  boxes.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) boxes.push_back(query_box(soup, x_begin, x_end, i, mode, inflate));

  NarrowPhaseResult out;
  for (int i = 0; i < t; ++i) {
    for (int j = i + 1; j < t; ++j) {
      if (!boxes[static_cast<std::size_t>(i)].overlaps(boxes[static_cast<std::size_t>(j)])) continue;
      narrow_phase_pair(soup, x_begin, x_end, i, j, mode, params, out);
    }
  }
  std::vector<NarrowPhaseResult> one;
  one.push_back(std::move(out));
  return sync_shared_cells(std::move(one));
}

int count_uncovered_impacts(const NarrowPhaseResult& brute, const CollisionSoup& soup,
                            const HashGrid& grid) {
  auto boxes_overlap = [&](int t1, int t2) {
    const auto& a = grid.tri_boxes[static_cast<std::size_t>(t1)];
    const auto& b = grid.tri_boxes[static_cast<std::size_t>(t2)];
    for (int axis = 0; axis < 3; ++axis) {
      if (std::max(a[static_cast<std::size_t>(axis)], b[static_cast<std::size_t>(axis)]) >
          std::min(a[static_cast<std::size_t>(axis + 3)], b[static_cast<std::size_t>(axis + 3)])) {
        return false;
      }
    }
    return true;
  };

  // Map every feature back to its incident triangles: vertex/face ids for
  // VF, edge ids for EE; conservativeness holds if some incident triangle
  // pair shares a cell.
  std::vector<std::vector<int>> vertex_tris(static_cast<std::size_t>(soup.vertex_count));
  std::vector<std::vector<int>> edge_tris(soup.edges.size());
  for (int t = 0; t < static_cast<int>(soup.triangles.size()); ++t) {
    for (int v : soup.triangles[static_cast<std::size_t>(t)]) vertex_tris[static_cast<std::size_t>(v)].push_back(t);
    for (int e : soup.tri_edges[static_cast<std::size_t>(t)]) edge_tris[static_cast<std::size_t>(e)].push_back(t);
  }

  int violations = 0;
  for (const auto& impact : brute.impacts) {
    bool covered = false;
    if (impact.kind == FeatureKind::VertexFace) {
      for (int t1 : vertex_tris[static_cast<std::size_t>(impact.a)]) {
        covered = covered || boxes_overlap(t1, impact.b);
      }
    } else {
      for (int t1 : edge_tris[static_cast<std::size_t>(impact.a)]) {
        for (int t2 : edge_tris[static_cast<std::size_t>(impact.b)]) {
          covered = covered || boxes_overlap(t1, t2);
        }
      }
    }
    violations += covered ? 0 : 1;
  }
  return violations;
}

std::int64_t recount_pairs(const HashGrid& grid) {
  std::int64_t total = 0;
  for (const auto& tris : grid.cell_tris) {
    const std::int64_t c = static_cast<std::int64_t>(tris.size());
    total += c * (c - 1) / 2;
  }
  return total;
}

RandomScene random_two_cloth_scene(Rng& rng, int max_side) {
  RandomScene scene;
  const int side1 = rng.uniform_int(3, max_side);
  const int side2 = rng.uniform_int(3, max_side);
  auto grid1 = make_grid_mesh(side1, side1, 0.5, 0.5, Vec3(0, 0, 0), 0.1);
  auto grid2 = make_grid_mesh(side2, side2, 0.5, 0.5, Vec3(0.1, 0.1, 0.2), 0.1);

  std::vector<std::array<int, 3>> tris = grid1.triangles;
  const int offset = grid1.vertex_count();
  for (auto t : grid2.triangles) {
    tris.push_back({t[0] + offset, t[1] + offset, t[2] + offset});
  }
  const int total_verts = offset + grid2.vertex_count();
  scene.soup = CollisionSoup::build(std::move(tris), total_verts,
                                    std::vector<std::uint8_t>(static_cast<std::size_t>(total_verts), 1));

  scene.x_begin.reserve(static_cast<std::size_t>(total_verts));
  for (const auto& v : grid1.rest_positions) scene.x_begin.push_back(v + rng.vec3(-0.01, 0.01));
  for (const auto& v : grid2.rest_positions) scene.x_begin.push_back(v + rng.vec3(-0.01, 0.01));

  // The top patch moves down through the bottom one; both get random drift.
  scene.x_end = scene.x_begin;
  const Vec3 sweep(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.45, -0.2));
  for (int v = 0; v < offset; ++v) scene.x_end[static_cast<std::size_t>(v)] += rng.vec3(-0.02, 0.02);
  for (int v = offset; v < total_verts; ++v) {
    scene.x_end[static_cast<std::size_t>(v)] += sweep + rng.vec3(-0.02, 0.02);
  }
  return scene;
}

}  // namespace weft::oracle
