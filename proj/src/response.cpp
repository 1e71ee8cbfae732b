#include "weft/response.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace weft {

namespace {

struct Participant {
  int vertex = -1;
  double weight = 0.0;  // signed: +side1, -side2
};

// Expands a proximity/impact into its four signed participants.
template <class Hit>
std::array<Participant, 4> participants(const Hit& hit, const CollisionSoup& soup) {
  std::array<Participant, 4> out{};
  if (hit.kind == FeatureKind::VertexFace) {
    const auto& tri = soup.triangles[static_cast<std::size_t>(hit.b)];
    out[0] = {hit.a, 1.0};
    for (int k = 0; k < 3; ++k) {
      out[static_cast<std::size_t>(k + 1)] = {tri[static_cast<std::size_t>(k)],
                                              -hit.weights[static_cast<std::size_t>(k + 1)]};
    }
  } else {
    const auto& e1 = soup.edges[static_cast<std::size_t>(hit.a)];
    const auto& e2 = soup.edges[static_cast<std::size_t>(hit.b)];
    out[0] = {e1[0], hit.weights[0]};
    out[1] = {e1[1], hit.weights[1]};
    out[2] = {e2[0], -hit.weights[2]};
    out[3] = {e2[1], -hit.weights[3]};
  }
  return out;
}

}  // namespace

std::vector<AssemblyElement> proximities_to_elements(const std::vector<Proximity>& proximities,
                                                     const CollisionSoup& soup,
                                                     std::span<const Vec3> x,
                                                     std::span<const Vec3> soup_velocity,
                                                     std::span<const double> vertex_mass, double dt,
                                                     const ContactParams& params) {
  // Active proximity count per vertex: overlapping elements on a vertex
  // share the stiffness budget, otherwise stacked layers overshoot.
  std::vector<int> active_count(static_cast<std::size_t>(soup.vertex_count), 0);
  for (const auto& prox : proximities) {
    if (prox.gap >= params.thickness) continue;
    for (const auto& part : participants(prox, soup)) {
      if (soup.movable[static_cast<std::size_t>(part.vertex)]) {
        active_count[static_cast<std::size_t>(part.vertex)] += 1;
      }
    }
  }

  std::vector<AssemblyElement> out;
  out.reserve(proximities.size());
  for (const auto& prox : proximities) {
    if (prox.gap >= params.thickness) continue;
    AssemblyElement e;
    e.kind = ElementKind::Contact;
    e.damping = params.damping;
    ContactData c;
    c.normal = prox.normal;
    c.activation = params.thickness;
    c.friction = params.friction;

    int count = 0;
    int overlap = 1;
    Vec3 rel_vel = Vec3::Zero();
    double inv_mass = 0.0;
    for (const auto& part : participants(prox, soup)) {
      rel_vel += part.weight * soup_velocity[static_cast<std::size_t>(part.vertex)];
      if (soup.movable[static_cast<std::size_t>(part.vertex)]) {
        e.stencil[static_cast<std::size_t>(count)] = part.vertex;
        c.w[static_cast<std::size_t>(count)] = part.weight;
        inv_mass += part.weight * part.weight / vertex_mass[static_cast<std::size_t>(part.vertex)];
        overlap = std::max(overlap, active_count[static_cast<std::size_t>(part.vertex)]);
        ++count;
      } else {
        c.bias += part.weight * c.normal.dot(x[static_cast<std::size_t>(part.vertex)]);
        c.rel_vel_bias += part.weight * soup_velocity[static_cast<std::size_t>(part.vertex)];
      }
    }
    if (count == 0 || inv_mass <= 0.0) continue;

    c.stiffness = params.stiffness_scale / (inv_mass * dt * dt * overlap);
    c.frozen_normal_force = c.stiffness * std::max(0.0, params.thickness - prox.gap);

    // Size the linear friction damper so its force at the creation-time
    // sliding speed matches mu * F_n (floored to keep c_t finite at rest).
    if (params.friction > 0.0) {
      const Vec3 v_t = rel_vel - c.normal.dot(rel_vel) * c.normal;
      c.tangential_damping = params.friction * c.frozen_normal_force / std::max(v_t.norm(), 0.05);
    }
    e.stencil_size = count;
    e.data = c;
    out.push_back(e);
  }
  return out;
}

std::vector<ImpactZone> build_zones(const std::vector<Impact>& impacts, const CollisionSoup& soup) {
  // Union-find over impact indices, linked through shared vertices.
  std::vector<int> parent(impacts.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<int> rank(impacts.size(), 0);
  auto find = [&](int i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
      parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
      i = parent[static_cast<std::size_t>(i)];
    }
    return i;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank[static_cast<std::size_t>(a)] < rank[static_cast<std::size_t>(b)]) std::swap(a, b);
    parent[static_cast<std::size_t>(b)] = a;
    rank[static_cast<std::size_t>(a)] += rank[static_cast<std::size_t>(a)] == rank[static_cast<std::size_t>(b)];
  };

  std::vector<int> vertex_owner(static_cast<std::size_t>(soup.vertex_count), -1);
  for (int i = 0; i < static_cast<int>(impacts.size()); ++i) {
    for (const auto& part : participants(impacts[static_cast<std::size_t>(i)], soup)) {
      int& owner = vertex_owner[static_cast<std::size_t>(part.vertex)];
      if (owner < 0) {
        owner = i;
      } else {
        unite(owner, i);
      }
    }
  }

  std::vector<ImpactZone> zones;
  std::vector<int> root_zone(impacts.size(), -1);
  for (int i = 0; i < static_cast<int>(impacts.size()); ++i) {
    const int root = find(i);
    if (root_zone[static_cast<std::size_t>(root)] < 0) {
      root_zone[static_cast<std::size_t>(root)] = static_cast<int>(zones.size());
      zones.push_back(ImpactZone{static_cast<int>(zones.size()), {}, {}});
    }
    zones[static_cast<std::size_t>(root_zone[static_cast<std::size_t>(root)])].impacts.push_back(i);
  }

  for (auto& zone : zones) {
    for (int i : zone.impacts) {
      for (const auto& part : participants(impacts[static_cast<std::size_t>(i)], soup)) {
        if (soup.movable[static_cast<std::size_t>(part.vertex)]) zone.vertices.push_back(part.vertex);
      }
    }
    std::sort(zone.vertices.begin(), zone.vertices.end());
    zone.vertices.erase(std::unique(zone.vertices.begin(), zone.vertices.end()), zone.vertices.end());
  }
  return zones;
}

std::vector<std::vector<int>> distribute_zones(const std::vector<ImpactZone>& zones, int devices) {
  std::vector<int> order(zones.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return zones[static_cast<std::size_t>(a)].vertices.size() > zones[static_cast<std::size_t>(b)].vertices.size();
  });

  std::vector<std::vector<int>> assignment(static_cast<std::size_t>(devices));
  std::vector<std::size_t> load(static_cast<std::size_t>(devices), 0);
  for (int z : order) {
    int best = 0;
    for (int d = 1; d < devices; ++d) {
      if (load[static_cast<std::size_t>(d)] < load[static_cast<std::size_t>(best)]) best = d;
    }
    assignment[static_cast<std::size_t>(best)].push_back(z);
    load[static_cast<std::size_t>(best)] += zones[static_cast<std::size_t>(z)].vertices.size();
  }
  return assignment;
}

namespace {

struct Constraint {
  std::array<Participant, 4> parts;
  Vec3 normal;
};

double constraint_gap(const Constraint& c, std::span<const Vec3> x, double clearance) {
  double g = -clearance;
  for (const auto& p : c.parts) g += p.weight * c.normal.dot(x[static_cast<std::size_t>(p.vertex)]);
  return g;
}

}  // namespace

void solve_zone(const ImpactZone& zone, const std::vector<Impact>& impacts,
                const CollisionSoup& soup, std::span<const Vec3> x_begin,
                std::span<const Vec3> x_candidate, std::span<const double> vertex_mass,
                const ZoneSolveParams& params, std::span<Vec3> x) {
  // Frozen constraint geometry from the impact records; normals oriented so
  // that larger g means separation, judged at the penetration-free begin
  // state.
  std::vector<Constraint> constraints;
  constraints.reserve(zone.impacts.size());
  for (int i : zone.impacts) {
    Constraint c{participants(impacts[static_cast<std::size_t>(i)], soup),
                 impacts[static_cast<std::size_t>(i)].normal};
    if (constraint_gap(c, x_begin, 0.0) < 0.0) c.normal = -c.normal;
    constraints.push_back(c);
  }

  const int nv = static_cast<int>(zone.vertices.size());
  if (nv == 0) return;
  std::vector<int> local_of(static_cast<std::size_t>(soup.vertex_count), -1);
  for (int i = 0; i < nv; ++i) {
    local_of[static_cast<std::size_t>(zone.vertices[static_cast<std::size_t>(i)])] = i;
  }

  // Penalty scaled by the zone's mass so the mass-preconditioned descent
  // sees curvature O(penalty_scale) instead of O(mu / m).
  double mean_mass = 0.0;
  for (int v : zone.vertices) mean_mass += vertex_mass[static_cast<std::size_t>(v)];
  mean_mass /= nv;
  std::vector<double> lambda(constraints.size(), 0.0);
  double mu = params.initial_penalty * mean_mass;

  std::vector<Vec3> grad(static_cast<std::size_t>(nv));
  auto objective = [&]() {
    double val = 0.0;
    for (int i = 0; i < nv; ++i) {
      const int v = zone.vertices[static_cast<std::size_t>(i)];
      val += 0.5 * vertex_mass[static_cast<std::size_t>(v)] *
             (x[static_cast<std::size_t>(v)] - x_candidate[static_cast<std::size_t>(v)]).squaredNorm();
    }
    for (std::size_t k = 0; k < constraints.size(); ++k) {
      const double g = constraint_gap(constraints[k], x, params.clearance);
      const double slack = std::max(0.0, lambda[k] / mu - g);
      val += 0.5 * mu * slack * slack;
    }
    return val;
  };

  auto compute_gradient = [&]() {
    double norm2 = 0.0;
    for (int i = 0; i < nv; ++i) {
      const int v = zone.vertices[static_cast<std::size_t>(i)];
      grad[static_cast<std::size_t>(i)] = vertex_mass[static_cast<std::size_t>(v)] *
                                          (x[static_cast<std::size_t>(v)] - x_candidate[static_cast<std::size_t>(v)]);
    }
    for (std::size_t k = 0; k < constraints.size(); ++k) {
      const auto& c = constraints[k];
      const double g = constraint_gap(c, x, params.clearance);
      const double force = std::max(0.0, lambda[k] - mu * g);
      if (force <= 0.0) continue;
      for (const auto& p : c.parts) {
        const int local = local_of[static_cast<std::size_t>(p.vertex)];
        if (local >= 0) grad[static_cast<std::size_t>(local)] -= force * p.weight * c.normal;
      }
    }
    for (int i = 0; i < nv; ++i) {
      const int v = zone.vertices[static_cast<std::size_t>(i)];
      norm2 += grad[static_cast<std::size_t>(i)].squaredNorm() / vertex_mass[static_cast<std::size_t>(v)];
    }
    return std::sqrt(norm2);
  };

  // Stopping scale: the preconditioned gradient norm of a clearance-sized
  // move is sqrt(m) * clearance.
  const double grad_tol = params.inner_tolerance * std::sqrt(mean_mass) * std::max(params.clearance, 1e-9);

  int retries = 0;
  double step = 1.0;
  double last_violation = std::numeric_limits<double>::infinity();
  for (int al = 0; al < params.al_iterations; ++al) {
    // Inner loop: mass-preconditioned gradient descent, adaptive step with
    // Armijo backtracking.
    double fx = objective();
    std::vector<Vec3> saved(static_cast<std::size_t>(nv));
    for (int it = 0; it < params.inner_iterations; ++it) {
      const double gnorm = compute_gradient();
      if (gnorm <= grad_tol) break;
      if (!std::isfinite(fx) || !std::isfinite(gnorm)) {
        // Divergence: escalate the penalty and restart from the candidate.
        if (++retries > params.retry_cap) {
          throw ZoneFailure("zone " + std::to_string(zone.id) + ": inner solver diverged");
        }
        mu *= 10.0;
        step = 1.0;
        for (int v : zone.vertices) x[static_cast<std::size_t>(v)] = x_candidate[static_cast<std::size_t>(v)];
        std::fill(lambda.begin(), lambda.end(), 0.0);
        fx = objective();
        continue;
      }

      for (int i = 0; i < nv; ++i) saved[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(zone.vertices[static_cast<std::size_t>(i)])];
      bool accepted = false;
      step = std::min(step * 2.0, 1.0);  // regrow after cautious iterations
      for (int bt = 0; bt < 40; ++bt) {
        for (int i = 0; i < nv; ++i) {
          const int v = zone.vertices[static_cast<std::size_t>(i)];
          x[static_cast<std::size_t>(v)] = saved[static_cast<std::size_t>(i)] -
                                           (step / vertex_mass[static_cast<std::size_t>(v)]) * grad[static_cast<std::size_t>(i)];
        }
        const double fnew = objective();
        if (fnew <= fx - 1e-4 * step * gnorm * gnorm) {
          fx = fnew;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        for (int i = 0; i < nv; ++i) x[static_cast<std::size_t>(zone.vertices[static_cast<std::size_t>(i)])] = saved[static_cast<std::size_t>(i)];
        break;  // no descent possible at this scale
      }
    }

    // Multiplier update and feasibility check.
    bool feasible = true;
    double violation = 0.0;
    for (std::size_t k = 0; k < constraints.size(); ++k) {
      const double g = constraint_gap(constraints[k], x, params.clearance);
      lambda[k] = std::max(0.0, lambda[k] - mu * g);
      if (g < -1e-10) {
        feasible = false;
        violation = std::max(violation, -g);
      }
    }
    if (feasible) return;
    if (violation > 0.25 * last_violation) mu *= 10.0;  // stalled: tighten the penalty
    last_violation = violation;
  }
}

ZoneResolveReport resolve_zones(Engine& engine, const CollisionSoup& soup,
                                std::span<const Vec3> x_begin, std::vector<Vec3>& x_candidate,
                                std::span<const double> vertex_mass, const CollisionParams& cparams,
                                const ZoneSolveParams& zparams, CollideTimes* times) {
  ZoneResolveReport report;
  // Constraints accumulate across rounds (one per feature pair, first
  // crossing wins); otherwise resolving one crossing can reintroduce an
  // earlier one and the loop ping-pongs.
  std::vector<Impact> impacts;
  std::set<std::tuple<FeatureKind, int, int>> seen;
  for (int outer = 0; outer < zparams.outer_cap; ++outer) {
    const auto fresh =
        collide(engine, soup, x_begin, x_candidate, CollisionMode::Continuous, cparams, times).impacts;
    if (outer == 0) report.first_round_impacts = static_cast<int>(fresh.size());
    if (fresh.empty()) return report;
    for (const auto& imp : fresh) {
      if (seen.insert({imp.kind, imp.a, imp.b}).second) impacts.push_back(imp);
    }

    report.outer_iterations = outer + 1;
    report.impacts_resolved += static_cast<int>(fresh.size());
    const auto zones = build_zones(impacts, soup);
    report.zone_count += static_cast<int>(zones.size());
    for (const auto& z : zones) {
      report.max_zone_vertices = std::max(report.max_zone_vertices, static_cast<int>(z.vertices.size()));
    }

    const auto assignment = distribute_zones(zones, engine.devices());
    // The proposal this round projects from; the live buffer then moves.
    const std::vector<Vec3> proposal = x_candidate;
    const double max_move = zparams.max_correction_factor * std::max(zparams.clearance, 1e-9);
    engine.parallel([&](int d) {
      for (int z : assignment[static_cast<std::size_t>(d)]) {
        const auto& zone = zones[static_cast<std::size_t>(z)];
        solve_zone(zone, impacts, soup, x_begin, proposal, vertex_mass, zparams, x_candidate);
        for (int v : zone.vertices) {
          const Vec3 move = x_candidate[static_cast<std::size_t>(v)] - proposal[static_cast<std::size_t>(v)];
          const double len = move.norm();
          if (len > max_move) {
            x_candidate[static_cast<std::size_t>(v)] = proposal[static_cast<std::size_t>(v)] + (max_move / len) * move;
          }
        }
      }
    });

    if (engine.options().instrument != nullptr) {
      std::ostringstream os;
      os << "event=zones outer=" << outer + 1 << " zones=" << zones.size() << " fresh=" << fresh.size()
         << " accumulated=" << impacts.size();
      engine.log_line(os.str());
    }
  }

  // Cap reached: collect the surviving zone ids for the failure report.
  const auto remaining =
      collide(engine, soup, x_begin, x_candidate, CollisionMode::Continuous, cparams, times).impacts;
  if (remaining.empty()) return report;
  const auto zones = build_zones(remaining, soup);
  std::ostringstream os;
  os << "impact zones unresolved after " << zparams.outer_cap << " outer iterations; zone ids:";
  for (const auto& z : zones) os << ' ' << z.id;
  throw ZoneFailure(os.str());
}

}  // namespace weft
