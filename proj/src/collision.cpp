#include "weft/collision.hpp"

#include <chrono>

#include <algorithm>
#include <cmath>
#include <map>

namespace weft {

namespace {

constexpr std::int64_t kLatticeBias = 1 << 20;
constexpr std::uint64_t kHashMul = 0x9E3779B97F4A7C15ull;

std::int64_t clamp_lattice(double v) {
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(v)), -kLatticeBias + 1,
                                  kLatticeBias - 1);
}

std::uint64_t pack_cell(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
  return (static_cast<std::uint64_t>(ix + kLatticeBias) << 42) |
         (static_cast<std::uint64_t>(iy + kLatticeBias) << 21) |
         static_cast<std::uint64_t>(iz + kLatticeBias);
}

// Open-addressing table from cell key to a dense list index.
class CellTable {
public:
  explicit CellTable(std::size_t expected) {
    std::size_t cap = 16;
    while (cap < expected * 2) cap <<= 1;
    slots_.assign(cap, {kEmpty, -1});
  }

  int find_or_insert(std::uint64_t key, int next_index) {
    for (;;) {
      std::size_t at = static_cast<std::size_t>((key * kHashMul) >> 17) & (slots_.size() - 1);
      for (;;) {
        auto& slot = slots_[at];
        if (slot.first == key) return slot.second;
        if (slot.first == kEmpty) {
          if (used_ * 10 >= slots_.size() * 7) break;  // grow and retry
          slot = {key, next_index};
          ++used_;
          return -next_index - 2;  // signals "new cell"
        }
        at = (at + 1) & (slots_.size() - 1);
      }
      grow();
    }
  }

private:
  void grow() {
    std::vector<std::pair<std::uint64_t, int>> old = std::move(slots_);
    slots_.assign(old.size() * 2, {kEmpty, -1});
    used_ = 0;
    for (const auto& s : old) {
      if (s.first == kEmpty) continue;
      std::size_t at = static_cast<std::size_t>((s.first * kHashMul) >> 17) & (slots_.size() - 1);
      while (slots_[at].first != kEmpty) at = (at + 1) & (slots_.size() - 1);
      slots_[at] = s;
      ++used_;
    }
  }

  static constexpr std::uint64_t kEmpty = ~0ull;
  std::vector<std::pair<std::uint64_t, int>> slots_;
  std::size_t used_ = 0;
};

struct QueryBox {
  Vec3 lo, hi;
};

QueryBox triangle_query_box(const CollisionSoup& soup, std::span<const Vec3> x0,
                            std::span<const Vec3> x1, int tri, CollisionMode mode, double inflate) {
  QueryBox box{Vec3::Constant(1e300), Vec3::Constant(-1e300)};
  for (int v : soup.triangles[static_cast<std::size_t>(tri)]) {
    box.lo = box.lo.cwiseMin(x0[static_cast<std::size_t>(v)]);
    box.hi = box.hi.cwiseMax(x0[static_cast<std::size_t>(v)]);
    if (mode == CollisionMode::Continuous) {
      box.lo = box.lo.cwiseMin(x1[static_cast<std::size_t>(v)]);
      box.hi = box.hi.cwiseMax(x1[static_cast<std::size_t>(v)]);
    }
  }
  box.lo -= Vec3::Constant(inflate);
  box.hi += Vec3::Constant(inflate);
  return box;
}

}  // namespace

CollisionSoup CollisionSoup::build(std::vector<std::array<int, 3>> triangles, int vertex_count,
                                   std::vector<std::uint8_t> movable) {
  CollisionSoup soup;
  soup.vertex_count = vertex_count;
  soup.triangles = std::move(triangles);
  soup.movable = std::move(movable);

  std::map<std::array<int, 2>, int> edge_ids;
  soup.tri_edges.resize(soup.triangles.size());
  for (std::size_t t = 0; t < soup.triangles.size(); ++t) {
    const auto& tri = soup.triangles[t];
    for (int k = 0; k < 3; ++k) {
      std::array<int, 2> e{tri[static_cast<std::size_t>(k)], tri[static_cast<std::size_t>((k + 1) % 3)]};
      if (e[0] > e[1]) std::swap(e[0], e[1]);
      auto [it, inserted] = edge_ids.try_emplace(e, static_cast<int>(edge_ids.size()));
      soup.tri_edges[t][static_cast<std::size_t>(k)] = it->second;
    }
  }
  soup.edges.resize(edge_ids.size());
  for (const auto& [e, id] : edge_ids) soup.edges[static_cast<std::size_t>(id)] = e;
  return soup;
}

GridBuildResult build_grid(const CollisionSoup& soup, std::span<const Vec3> x_begin,
                           std::span<const Vec3> x_end, CollisionMode mode,
                           const CollisionParams& params) {
  const int tri_count = static_cast<int>(soup.triangles.size());
  const double inflate = mode == CollisionMode::Discrete ? 0.5 * params.thickness : 1e-9;

  // Cell size from the mean query-box diagonal.
  std::vector<QueryBox> boxes;
  boxes.reserve(static_cast<std::size_t>(tri_count));
  double diag_sum = 0.0;
  for (int t = 0; t < tri_count; ++t) {
    boxes.push_back(triangle_query_box(soup, x_begin, x_end, t, mode, inflate));
    diag_sum += (boxes.back().hi - boxes.back().lo).norm();
  }
  const double mean_diag = tri_count > 0 ? diag_sum / tri_count : 1.0;
  const double cell = std::max(params.cell_scale * mean_diag, 1e-9);

  GridBuildResult out;
  out.grid.cell_size = cell;
  out.grid.tri_boxes.resize(static_cast<std::size_t>(tri_count));

  CellTable table(static_cast<std::size_t>(tri_count) * 2 + 16);
  std::vector<std::pair<std::uint64_t, std::vector<int>>> cells;
  for (int t = 0; t < tri_count; ++t) {
    auto& lat = out.grid.tri_boxes[static_cast<std::size_t>(t)];
    for (int axis = 0; axis < 3; ++axis) {
      lat[static_cast<std::size_t>(axis)] = clamp_lattice(boxes[static_cast<std::size_t>(t)].lo[axis] / cell);
      lat[static_cast<std::size_t>(axis + 3)] = clamp_lattice(boxes[static_cast<std::size_t>(t)].hi[axis] / cell);
    }
    for (std::int64_t ix = lat[0]; ix <= lat[3]; ++ix) {
      for (std::int64_t iy = lat[1]; iy <= lat[4]; ++iy) {
        for (std::int64_t iz = lat[2]; iz <= lat[5]; ++iz) {
          const std::uint64_t key = pack_cell(ix, iy, iz);
          const int found = table.find_or_insert(key, static_cast<int>(cells.size()));
          if (found < -1) {
            cells.push_back({key, {t}});
          } else {
            cells[static_cast<std::size_t>(found)].second.push_back(t);
          }
        }
      }
    }
  }

  std::sort(cells.begin(), cells.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  out.grid.cell_keys.reserve(cells.size());
  out.grid.cell_tris.reserve(cells.size());
  out.table.counts.reserve(cells.size());
  out.table.prefix.reserve(cells.size() + 1);
  out.table.prefix.push_back(0);
  for (auto& [key, tris] : cells) {
    const std::int64_t c = static_cast<std::int64_t>(tris.size());
    out.grid.cell_keys.push_back(key);
    out.grid.cell_tris.push_back(std::move(tris));
    out.table.counts.push_back(c * (c - 1) / 2);
    out.table.prefix.push_back(out.table.prefix.back() + out.table.counts.back());
  }
  out.table.total = out.table.prefix.back();
  return out;
}

std::vector<PairRange> split_workload(const WorkloadTable& table, int devices) {
  std::vector<PairRange> ranges(static_cast<std::size_t>(devices));
  const std::int64_t base = table.total / devices;
  const std::int64_t extra = table.total % devices;
  std::int64_t cursor = 0;
  for (int d = 0; d < devices; ++d) {
    const std::int64_t size = base + (d < extra ? 1 : 0);
    ranges[static_cast<std::size_t>(d)] = {d, cursor, cursor + size};
    cursor += size;
  }
  return ranges;
}

namespace {

bool features_all_immovable(const CollisionSoup& soup, std::initializer_list<int> verts) {
  for (int v : verts) {
    if (soup.movable[static_cast<std::size_t>(v)]) return false;
  }
  return true;
}

// Smallest common cell of two lattice boxes; the boxes always intersect
// for a candidate pair (they share the current cell).
std::uint64_t min_common_cell(const std::array<std::int64_t, 6>& a, const std::array<std::int64_t, 6>& b) {
  const std::int64_t ix = std::max(a[0], b[0]);
  const std::int64_t iy = std::max(a[1], b[1]);
  const std::int64_t iz = std::max(a[2], b[2]);
  return pack_cell(ix, iy, iz);
}

}  // namespace

void narrow_phase_pair(const CollisionSoup& soup, std::span<const Vec3> x0, std::span<const Vec3> x1,
                       int t1, int t2, CollisionMode mode, const CollisionParams& params,
                       NarrowPhaseResult& out) {
  const auto& tri1 = soup.triangles[static_cast<std::size_t>(t1)];
  const auto& tri2 = soup.triangles[static_cast<std::size_t>(t2)];

  auto tri_contains = [](const std::array<int, 3>& tri, int v) {
    return tri[0] == v || tri[1] == v || tri[2] == v;
  };

  // Feature-box precheck. Boxes cover begin (and, for CCD, end) positions;
  // separation by more than the thickness margin proves the exact test
  // cannot hit, so rejecting here never changes the result set.
  const bool continuous = mode == CollisionMode::Continuous;
  const double margin = continuous ? 1e-9 : params.thickness;
  auto feature_apart = [&](std::initializer_list<int> fa, std::initializer_list<int> fb) {
    for (int axis = 0; axis < 3; ++axis) {
      double lo_a = 1e300, hi_a = -1e300, lo_b = 1e300, hi_b = -1e300;
      for (int v : fa) {
        const double p0 = x0[static_cast<std::size_t>(v)][axis];
        lo_a = std::min(lo_a, p0);
        hi_a = std::max(hi_a, p0);
        if (continuous) {
          const double p1 = x1[static_cast<std::size_t>(v)][axis];
          lo_a = std::min(lo_a, p1);
          hi_a = std::max(hi_a, p1);
        }
      }
      for (int v : fb) {
        const double p0 = x0[static_cast<std::size_t>(v)][axis];
        lo_b = std::min(lo_b, p0);
        hi_b = std::max(hi_b, p0);
        if (continuous) {
          const double p1 = x1[static_cast<std::size_t>(v)][axis];
          lo_b = std::min(lo_b, p1);
          hi_b = std::max(hi_b, p1);
        }
      }
      if (lo_a > hi_b + margin || lo_b > hi_a + margin) return true;
    }
    return false;
  };

  // Vertex-face tests, both directions; shared vertices are exempt.
  for (int dir = 0; dir < 2; ++dir) {
    const auto& vt = dir == 0 ? tri1 : tri2;
    const auto& ft = dir == 0 ? tri2 : tri1;
    const int face_id = dir == 0 ? t2 : t1;
    for (int v : vt) {
      if (tri_contains(ft, v)) continue;
      if (features_all_immovable(soup, {v, ft[0], ft[1], ft[2]})) continue;
      if (feature_apart({v}, {ft[0], ft[1], ft[2]})) continue;
      if (mode == CollisionMode::Discrete) {
        const auto hit = dcd_vertex_face(x0[static_cast<std::size_t>(v)], x0[static_cast<std::size_t>(ft[0])],
                                         x0[static_cast<std::size_t>(ft[1])], x0[static_cast<std::size_t>(ft[2])],
                                         params.thickness);
        if (hit) {
          out.proximities.push_back({FeatureKind::VertexFace, v, face_id, hit->gap, hit->normal, hit->weights});
        }
      } else {
        const auto hit = ccd_vertex_face(
            x0[static_cast<std::size_t>(v)], x1[static_cast<std::size_t>(v)], x0[static_cast<std::size_t>(ft[0])],
            x1[static_cast<std::size_t>(ft[0])], x0[static_cast<std::size_t>(ft[1])], x1[static_cast<std::size_t>(ft[1])],
            x0[static_cast<std::size_t>(ft[2])], x1[static_cast<std::size_t>(ft[2])]);
        if (hit) {
          out.impacts.push_back({FeatureKind::VertexFace, v, face_id, hit->toi, hit->normal, hit->weights});
        }
      }
    }
  }

  // Edge-edge tests in canonical (min id, max id) orientation.
  for (int ea : soup.tri_edges[static_cast<std::size_t>(t1)]) {
    for (int eb : soup.tri_edges[static_cast<std::size_t>(t2)]) {
      if (ea == eb) continue;
      const int lo = std::min(ea, eb), hi = std::max(ea, eb);
      const auto& e1 = soup.edges[static_cast<std::size_t>(lo)];
      const auto& e2 = soup.edges[static_cast<std::size_t>(hi)];
      if (e1[0] == e2[0] || e1[0] == e2[1] || e1[1] == e2[0] || e1[1] == e2[1]) continue;
      if (features_all_immovable(soup, {e1[0], e1[1], e2[0], e2[1]})) continue;
      if (feature_apart({e1[0], e1[1]}, {e2[0], e2[1]})) continue;
      if (mode == CollisionMode::Discrete) {
        const auto hit = dcd_edge_edge(x0[static_cast<std::size_t>(e1[0])], x0[static_cast<std::size_t>(e1[1])],
                                       x0[static_cast<std::size_t>(e2[0])], x0[static_cast<std::size_t>(e2[1])],
                                       params.thickness);
        if (hit) out.proximities.push_back({FeatureKind::EdgeEdge, lo, hi, hit->gap, hit->normal, hit->weights});
      } else {
        const auto hit = ccd_edge_edge(
            x0[static_cast<std::size_t>(e1[0])], x1[static_cast<std::size_t>(e1[0])], x0[static_cast<std::size_t>(e1[1])],
            x1[static_cast<std::size_t>(e1[1])], x0[static_cast<std::size_t>(e2[0])], x1[static_cast<std::size_t>(e2[0])],
            x0[static_cast<std::size_t>(e2[1])], x1[static_cast<std::size_t>(e2[1])]);
        if (hit) out.impacts.push_back({FeatureKind::EdgeEdge, lo, hi, hit->toi, hit->normal, hit->weights});
      }
    }
  }
}

namespace {

template <class T>
void sort_dedup(std::vector<T>& items) {
  std::sort(items.begin(), items.end(), [](const T& lhs, const T& rhs) {
    if (lhs.kind != rhs.kind) return lhs.kind < rhs.kind;
    if (lhs.a != rhs.a) return lhs.a < rhs.a;
    return lhs.b < rhs.b;
  });
  items.erase(std::unique(items.begin(), items.end(),
                          [](const T& lhs, const T& rhs) {
                            return lhs.kind == rhs.kind && lhs.a == rhs.a && lhs.b == rhs.b;
                          }),
              items.end());
}

}  // namespace

NarrowPhaseResult narrow_phase_range(const CollisionSoup& soup, std::span<const Vec3> x_begin,
                                     std::span<const Vec3> x_end, const HashGrid& grid,
                                     const WorkloadTable& table, const PairRange& range,
                                     CollisionMode mode, const CollisionParams& params) {
  NarrowPhaseResult out;
  if (range.begin >= range.end) return out;

  // Locate the starting cell, then walk the flattened (cell, pair) space.
  std::size_t cell = static_cast<std::size_t>(
      std::upper_bound(table.prefix.begin(), table.prefix.end(), range.begin) - table.prefix.begin() - 1);
  std::int64_t local = range.begin - table.prefix[cell];

  // Convert the local pair index into (i, j) positions within the cell.
  const auto advance_to = [&](std::int64_t k, std::size_t c, int& i, int& j) {
    const int s = static_cast<int>(grid.cell_tris[c].size());
    i = 0;
    std::int64_t remaining = k;
    while (remaining >= s - 1 - i) {
      remaining -= s - 1 - i;
      ++i;
    }
    j = i + 1 + static_cast<int>(remaining);
  };

  int i = 0, j = 0;
  advance_to(local, cell, i, j);
  for (std::int64_t g = range.begin; g < range.end; ++g) {
    while (g >= table.prefix[cell + 1]) {
      ++cell;
      i = 0;
      j = 1;
    }
    const auto& tris = grid.cell_tris[cell];
    const int t1 = tris[static_cast<std::size_t>(i)];
    const int t2 = tris[static_cast<std::size_t>(j)];

    // Exactly-once rule: process the pair only in its smallest common cell.
    if (min_common_cell(grid.tri_boxes[static_cast<std::size_t>(t1)],
                        grid.tri_boxes[static_cast<std::size_t>(t2)]) == grid.cell_keys[cell]) {
      narrow_phase_pair(soup, x_begin, x_end, t1, t2, mode, params, out);
    }

    // Advance the triangular enumeration.
    if (++j >= static_cast<int>(tris.size())) {
      ++i;
      j = i + 1;
    }
  }
  return out;
}

NarrowPhaseResult sync_shared_cells(std::vector<NarrowPhaseResult> per_device) {
  NarrowPhaseResult merged;
  for (auto& r : per_device) {
    merged.proximities.insert(merged.proximities.end(), r.proximities.begin(), r.proximities.end());
    merged.impacts.insert(merged.impacts.end(), r.impacts.begin(), r.impacts.end());
  }
  sort_dedup(merged.proximities);
  sort_dedup(merged.impacts);
  return merged;
}

NarrowPhaseResult collide(Engine& engine, const CollisionSoup& soup, std::span<const Vec3> x_begin,
                          std::span<const Vec3> x_end, CollisionMode mode,
                          const CollisionParams& params, CollideTimes* times) {
  const int n = engine.devices();
  const auto t0 = std::chrono::steady_clock::now();

  // Each device constructs its own copy of the grid (no data transfers).
  std::vector<GridBuildResult> grids(static_cast<std::size_t>(n));
  engine.parallel([&](int d) { grids[static_cast<std::size_t>(d)] = build_grid(soup, x_begin, x_end, mode, params); });
  const auto t1 = std::chrono::steady_clock::now();

  const auto ranges = split_workload(grids[0].table, n);
  std::vector<NarrowPhaseResult> results(static_cast<std::size_t>(n));
  engine.parallel([&](int d) {
    const auto& g = grids[static_cast<std::size_t>(d)];
    results[static_cast<std::size_t>(d)] =
        narrow_phase_range(soup, x_begin, x_end, g.grid, g.table, ranges[static_cast<std::size_t>(d)], mode, params);
  });
  auto merged = sync_shared_cells(std::move(results));
  const auto t2 = std::chrono::steady_clock::now();

  if (times != nullptr) {
    times->grid_seconds += std::chrono::duration<double>(t1 - t0).count();
    times->narrow_seconds += std::chrono::duration<double>(t2 - t1).count();
  }
  return merged;
}

}  // namespace weft
