#pragma once

#include "weft/common.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace weft {

/// Triangle cloth mesh with the rest-state quantities the force elements
/// need: per-triangle material frames, hinge rest angles, and lumped
/// (mixed Voronoi) vertex masses.
struct ClothMesh {
  std::vector<Vec3> rest_positions;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 2>> edges;  // unique, each sorted (a < b)

  struct Hinge {
    std::array<int, 4> verts{};  // edge0, edge1, wingA, wingB
    double rest_angle = 0.0;
    double stiffness_scale = 1.0;  // 3 |e|^2 / (A1 + A2) at rest
  };
  std::vector<Hinge> hinges;

  struct TriRest {
    std::array<double, 3> pwu{};
    std::array<double, 3> pwv{};
    double area = 0.0;
    bool degenerate = false;
  };
  std::vector<TriRest> tri_rest;

  std::vector<double> vertex_area;
  std::vector<double> vertex_mass;
  int degenerate_triangles = 0;

  int vertex_count() const { return static_cast<int>(rest_positions.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }

  /// Validating constructor: rejects out-of-range indices and non-manifold
  /// edges, computes rest data and masses (density in kg/m^2).
  static ClothMesh build(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> tris,
                         double density);

  /// Test/tool escape hatch: explicit masses, no validation, still computes
  /// rest data for whatever triangles are present.
  static ClothMesh from_raw(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> tris,
                            std::vector<double> masses);
};

/// Axis-aligned rectangular grid in the plane z = z0, rows along +x.
ClothMesh make_grid_mesh(int nx, int ny, double width, double height, const Vec3& origin,
                         double density);

/// Plain triangle soup (obstacles do not need rest data).
struct TriSoup {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

TriSoup make_uv_sphere(const Vec3& center, double radius, int stacks, int slices);
/// Open funnel: a truncated cone from a wide top ring down to a narrow
/// bottom ring (no caps), axis -z.
TriSoup make_funnel(const Vec3& top_center, double top_radius, double bottom_radius, double height,
                    int segments);
TriSoup make_box(const Vec3& center, const Vec3& half_extents);

/// Minimal OBJ subset: `v x y z` and `f i j k ...` records (1-based,
/// polygons fan-triangulated). Throws SceneError with the path and line on
/// malformed input.
TriSoup load_obj(const std::string& path);
void save_obj(std::ostream& os, const std::vector<Vec3>& positions,
              const std::vector<std::array<int, 3>>& triangles);
void save_obj(const std::string& path, const std::vector<Vec3>& positions,
              const std::vector<std::array<int, 3>>& triangles);

}  // namespace weft
