#pragma once

#include "weft/exec.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace weft {

struct CollisionParams {
  double thickness = 0.005;  // proximity thickness h (meters)
  double cell_scale = 1.5;   // cell size = scale * mean query-box diagonal
};

enum class CollisionMode { Discrete, Continuous };

enum class FeatureKind : std::uint8_t { VertexFace, EdgeEdge };

/// DCD result: feature pair within distance h. For VertexFace, a = vertex
/// id and b = triangle id, weights = (1, bary0..bary2). For EdgeEdge,
/// a < b are edge ids, weights = (1-s, s, 1-t, t). The normal points from
/// the second primitive toward the first.
struct Proximity {
  FeatureKind kind;
  int a = -1;
  int b = -1;
  double gap = 0.0;
  Vec3 normal = Vec3::Zero();
  std::array<double, 4> weights{};
};

/// CCD result: earliest contact time in [0, 1] for the feature pair.
struct Impact {
  FeatureKind kind;
  int a = -1;
  int b = -1;
  double toi = 0.0;
  Vec3 normal = Vec3::Zero();
  std::array<double, 4> weights{};
};

/// Static collision topology over the combined cloth + obstacle soup.
struct CollisionSoup {
  int vertex_count = 0;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 2>> edges;      // unique, each sorted
  std::vector<std::array<int, 3>> tri_edges;  // per triangle: edge ids
  std::vector<std::uint8_t> movable;          // per vertex

  static CollisionSoup build(std::vector<std::array<int, 3>> triangles, int vertex_count,
                             std::vector<std::uint8_t> movable);
};

/// Frame-local triangle hash table plus the per-triangle lattice boxes the
/// dedup rule needs. Cells are iterated in sorted key order.
struct HashGrid {
  double cell_size = 0.0;
  std::vector<std::uint64_t> cell_keys;         // sorted
  std::vector<std::vector<int>> cell_tris;      // triangle ids, ascending
  std::vector<std::array<std::int64_t, 6>> tri_boxes;  // per triangle lattice box (lo, hi inclusive)
};

struct WorkloadTable {
  std::vector<std::int64_t> counts;  // per cell: c*(c-1)/2
  std::vector<std::int64_t> prefix;  // exclusive, size cells+1
  std::int64_t total = 0;
};

struct PairRange {
  int device = 0;
  std::int64_t begin = 0;
  std::int64_t end = 0;
};

/// Builds the grid over the query boxes: current AABBs inflated by h/2 in
/// Discrete mode, swept begin->end AABBs in Continuous mode.
struct GridBuildResult {
  HashGrid grid;
  WorkloadTable table;
};
GridBuildResult build_grid(const CollisionSoup& soup, std::span<const Vec3> x_begin,
                           std::span<const Vec3> x_end, CollisionMode mode,
                           const CollisionParams& params);

/// Splits [0, W) into device intervals whose sizes differ by at most one.
std::vector<PairRange> split_workload(const WorkloadTable& table, int devices);

struct NarrowPhaseResult {
  std::vector<Proximity> proximities;
  std::vector<Impact> impacts;
};

/// Processes one pair-index interval (pure; callable from any device). A
/// candidate triangle pair is handled only in the smallest common cell of
/// the two lattice boxes so that every pair is tested exactly once across
/// all devices.
NarrowPhaseResult narrow_phase_range(const CollisionSoup& soup, std::span<const Vec3> x_begin,
                                     std::span<const Vec3> x_end, const HashGrid& grid,
                                     const WorkloadTable& table, const PairRange& range,
                                     CollisionMode mode, const CollisionParams& params);

/// All feature tests (6 VF + 9 EE, adjacency-exempt) of one triangle pair;
/// appends hits to `out`. t1 < t2 is the canonical orientation.
void narrow_phase_pair(const CollisionSoup& soup, std::span<const Vec3> x_begin,
                       std::span<const Vec3> x_end, int t1, int t2, CollisionMode mode,
                       const CollisionParams& params, NarrowPhaseResult& out);

/// Canonical union of per-device results: sorted by feature key, exact
/// duplicates (from cells shared between devices) removed.
NarrowPhaseResult sync_shared_cells(std::vector<NarrowPhaseResult> per_device);

struct CollideTimes {
  double grid_seconds = 0.0;    // broad phase (replicated grid builds)
  double narrow_seconds = 0.0;  // elementary tests + merge
};

/// Full pipeline: replicated grid build on every device, balanced ranges,
/// per-device narrow phase, deduplicating merge. The result is independent
/// of the device count.
NarrowPhaseResult collide(Engine& engine, const CollisionSoup& soup, std::span<const Vec3> x_begin,
                          std::span<const Vec3> x_end, CollisionMode mode, const CollisionParams& params,
                          CollideTimes* times = nullptr);

// --- Elementary tests (shared by the pipeline and the brute-force oracle) ---

struct DcdHit {
  double gap = 0.0;
  Vec3 normal = Vec3::Zero();
  std::array<double, 4> weights{};
};

std::optional<DcdHit> dcd_vertex_face(const Vec3& v, const Vec3& a, const Vec3& b, const Vec3& c,
                                      double h);
std::optional<DcdHit> dcd_edge_edge(const Vec3& p1, const Vec3& p2, const Vec3& q1, const Vec3& q2,
                                    double h);

struct CcdHit {
  double toi = 0.0;
  Vec3 normal = Vec3::Zero();
  std::array<double, 4> weights{};
};

std::optional<CcdHit> ccd_vertex_face(const Vec3& v0, const Vec3& v1, const Vec3& a0, const Vec3& a1,
                                      const Vec3& b0, const Vec3& b1, const Vec3& c0, const Vec3& c1);
std::optional<CcdHit> ccd_edge_edge(const Vec3& p10, const Vec3& p11, const Vec3& p20, const Vec3& p21,
                                    const Vec3& q10, const Vec3& q11, const Vec3& q20, const Vec3& q21);

/// Roots of c3 t^3 + c2 t^2 + c1 t + c0 in [0, 1], ascending, found by
/// monotone-interval bisection (exposed for tests).
int cubic_roots_in_unit_interval(double c3, double c2, double c1, double c0, std::array<double, 3>& roots);

}  // namespace weft
