#pragma once

#include "weft/collision.hpp"
#include "weft/elements.hpp"

namespace weft {

class ZoneFailure : public Error {
public:
  using Error::Error;
};

struct ContactParams {
  double thickness = 0.005;         // activation distance h
  double clearance_fraction = 0.5;  // zone target h' = fraction * h
  // Repulsion spring per element: k = stiffness_scale * m_eff / dt^2, so
  // the implicit system stays well conditioned regardless of vertex mass.
  double stiffness_scale = 4.0;
  double friction = 0.2;
  double damping = 0.0;  // stiffness-proportional term for contact elements
};

/// Builds one contact assembly element per DCD proximity. Immovable
/// participants (obstacle vertices, pins) are folded into the constant
/// bias/velocity terms; the stencil carries only movable vertices.
std::vector<AssemblyElement> proximities_to_elements(const std::vector<Proximity>& proximities,
                                                     const CollisionSoup& soup,
                                                     std::span<const Vec3> x,
                                                     std::span<const Vec3> soup_velocity,
                                                     std::span<const double> vertex_mass, double dt,
                                                     const ContactParams& params);

/// Connected components of the impact graph (impacts adjacent iff they
/// share a vertex). `vertices` lists the movable members, sorted.
struct ImpactZone {
  int id = 0;
  std::vector<int> impacts;
  std::vector<int> vertices;
};

std::vector<ImpactZone> build_zones(const std::vector<Impact>& impacts, const CollisionSoup& soup);

/// Greedy balanced assignment: zones in descending vertex count go to the
/// least-loaded device. Returns per-device zone index lists.
std::vector<std::vector<int>> distribute_zones(const std::vector<ImpactZone>& zones, int devices);

struct ZoneSolveParams {
  double clearance = 0.0025;     // h'
  double initial_penalty = 10.0;  // mu, in units of the mean zone vertex mass
  double inner_tolerance = 1e-8;
  int al_iterations = 25;    // multiplier updates per zone
  int inner_iterations = 64; // gradient steps per multiplier update
  int outer_cap = 10;        // CCD-and-resolve rounds
  int retry_cap = 3;         // penalty escalations after divergence
  // Trust region: per-vertex displacement cap per outer round, in units of
  // the clearance. Keeps conflicting frozen constraints (sharp rims,
  // stacked layers) from catapulting vertices; the next round's fresh CCD
  // handles whatever remains.
  double max_correction_factor = 8.0;
};

struct ZoneResolveReport {
  int outer_iterations = 0;
  int zone_count = 0;       // zones over all outer rounds
  int max_zone_vertices = 0;
  int impacts_resolved = 0;
  int first_round_impacts = 0;  // CCD count before any correction
};

/// Minimizes the mass-weighted distance to the candidate positions subject
/// to per-impact non-penetration constraints via augmented Lagrangian with
/// a gradient-descent inner loop (one zone, single threaded; exposed for
/// tests). Mutates x; only zone vertices move.
void solve_zone(const ImpactZone& zone, const std::vector<Impact>& impacts,
                const CollisionSoup& soup, std::span<const Vec3> x_begin,
                std::span<const Vec3> x_candidate, std::span<const double> vertex_mass,
                const ZoneSolveParams& params, std::span<Vec3> x);

/// Outer loop: CCD over begin -> current, zones built and solved in
/// parallel (master collects, greedily assigns), repeated until no impacts
/// remain. Throws ZoneFailure with the zone ids if the cap is reached.
ZoneResolveReport resolve_zones(Engine& engine, const CollisionSoup& soup,
                                std::span<const Vec3> x_begin, std::vector<Vec3>& x_candidate,
                                std::span<const double> vertex_mass, const CollisionParams& cparams,
                                const ZoneSolveParams& zparams, CollideTimes* times = nullptr);

}  // namespace weft
