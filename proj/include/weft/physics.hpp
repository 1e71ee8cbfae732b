#pragma once

#include "weft/assembly.hpp"
#include "weft/mesh.hpp"

namespace weft {

struct MaterialParams {
  double stretch_warp = 400.0;  // N/m, along the material u axis
  double stretch_weft = 400.0;  // N/m, along the material v axis
  double shear = 60.0;          // N/m
  double bend = 2e-5;           // N*m, scaled per hinge by rest geometry
  double density = 0.15;        // kg/m^2
  double damping = 0.002;       // stiffness-proportional velocity damping, s
  double air_drag = 0.0;        // N*s/m^3, scaled by vertex area
};

struct SimState {
  std::vector<Vec3> x;
  std::vector<Vec3> v;
  double time = 0.0;

  static SimState rest(const ClothMesh& mesh) {
    SimState s;
    s.x = mesh.rest_positions;
    s.v.assign(mesh.rest_positions.size(), Vec3::Zero());
    return s;
  }
};

struct ElementBuildReport {
  int skipped_degenerate = 0;
};

/// Internal (stretch/shear + hinge bend) and external (gravity, wind)
/// assembly elements in deterministic order: triangles, hinges, vertices.
/// Wind is a constant pressure (N/m^2) scaled by the vertex Voronoi area.
std::vector<AssemblyElement> build_elements(const ClothMesh& mesh, const MaterialParams& params,
                                            const Vec3& gravity, const Vec3& wind,
                                            ElementBuildReport* report = nullptr);

/// Backward-Euler system (M - (dt^2 + damping*dt) J) dv = dt f(x + dt v)
/// for the internal/external element set plus the given contact elements.
template <class Real>
AssembledSystem<Real> step_system(Engine& engine, const ClothMesh& mesh, const SimState& state,
                                  const MaterialParams& params, std::span<const std::uint8_t> pinned,
                                  std::vector<AssemblyElement> contact_elements, double dt,
                                  const Vec3& gravity, const Vec3& wind,
                                  JacobianMode mode = JacobianMode::SpdProjected) {
  std::vector<AssemblyElement> elements = build_elements(mesh, params, gravity, wind);
  elements.insert(elements.end(), std::make_move_iterator(contact_elements.begin()),
                  std::make_move_iterator(contact_elements.end()));

  std::vector<Vec3> advanced(state.x.size());
  for (std::size_t i = 0; i < state.x.size(); ++i) advanced[i] = state.x[i] + dt * state.v[i];

  const auto partitions = make_partitions(mesh.vertex_count(), engine.devices());
  const auto dist = distribute_elements(elements, partitions);
  SystemInputs in;
  in.elements = elements;
  in.x_current = state.x;
  in.x_advanced = advanced;
  in.velocity = state.v;
  in.mass = mesh.vertex_mass;
  in.pinned = pinned;
  in.dt = dt;
  in.mode = mode;
  return fill_matrix<Real>(engine, dist, in, partitions);
}

}  // namespace weft
