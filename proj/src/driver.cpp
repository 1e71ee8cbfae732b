#include "weft/driver.hpp"

#include <chrono>
#include <sstream>

namespace weft {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::Matrix3d axis_angle(const Vec3& axis, double angle) {
  const double len = axis.norm();
  if (len < 1e-12 || angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, axis / len).toRotationMatrix();
}

}  // namespace

std::vector<Vec3> Obstacle::positions_at(double t) const {
  std::vector<Vec3> out = shape.vertices;
  if (keyframes.empty()) return out;

  Keyframe k;
  if (t <= keyframes.front().time) {
    k = keyframes.front();
  } else if (t >= keyframes.back().time) {
    k = keyframes.back();
  } else {
    std::size_t hi = 1;
    while (keyframes[hi].time < t) ++hi;
    const auto& a = keyframes[hi - 1];
    const auto& b = keyframes[hi];
    const double u = (t - a.time) / std::max(1e-12, b.time - a.time);
    k = a;
    k.translate = (1.0 - u) * a.translate + u * b.translate;
    k.angle = (1.0 - u) * a.angle + u * b.angle;
    k.axis = b.axis;
    k.center = b.center;
  }

  const Eigen::Matrix3d rot = axis_angle(k.axis, k.angle);
  for (auto& p : out) p = rot * (p - k.center) + k.center + k.translate;
  return out;
}

const std::vector<std::string>& canonical_stage_order() {
  static const std::vector<std::string> order = {"proximity_dcd", "assemble", "solve",
                                                 "candidate",     "ccd",      "zones", "commit"};
  return order;
}

Simulator::Simulator(ClothMesh mesh, std::vector<std::uint8_t> pinned, std::vector<Obstacle> obstacles,
                     SimConfig config, std::ostream* instrument)
    : mesh_(std::move(mesh)), pinned_(std::move(pinned)), obstacles_(std::move(obstacles)),
      config_(config) {
  if (config_.dt <= 0.0) throw SceneError("dt must be positive");
  if (!is_power_of_two(config_.devices)) throw SceneError("device count must be a power of two");
  pinned_.resize(static_cast<std::size_t>(mesh_.vertex_count()), 0);

  state_ = SimState::rest(mesh_);

  EngineOptions opts;
  opts.link_latency_seconds = config_.link_latency;
  opts.instrument = instrument;
  engine_ = std::make_unique<Engine>(config_.devices, opts);
  schedule_ = config_.devices == 1
                  ? ValidatedSchedule()
                  : ValidatedSchedule(generate_work_queues(FatTree::make(config_.devices)), config_.devices);

  // Collision soup topology: cloth vertices first, then obstacle vertices.
  std::vector<std::array<int, 3>> tris = mesh_.triangles;
  int base = mesh_.vertex_count();
  std::vector<std::uint8_t> movable(static_cast<std::size_t>(base), 1);
  for (int v = 0; v < base; ++v) movable[static_cast<std::size_t>(v)] = pinned_[static_cast<std::size_t>(v)] ? 0 : 1;
  for (const auto& obstacle : obstacles_) {
    for (const auto& t : obstacle.shape.triangles) {
      tris.push_back({t[0] + base, t[1] + base, t[2] + base});
    }
    base += static_cast<int>(obstacle.shape.vertices.size());
    movable.resize(static_cast<std::size_t>(base), 0);
  }
  soup_ = CollisionSoup::build(std::move(tris), base, std::move(movable));

  // Keep the zone clearance consistent with the collision thickness.
  config_.contact.thickness = config_.collision.thickness;
  config_.zones.clearance = config_.contact.clearance_fraction * config_.collision.thickness;
}

FrameReport Simulator::step() {
  return config_.precision == Precision::Double ? step_impl<double>() : step_impl<float>();
}

template <class Real>
FrameReport Simulator::step_impl() {
  FrameReport report;
  report.frame = frame_;
  report.time = state_.time;
  const int p = mesh_.vertex_count();
  const double dt = config_.dt;

  auto log_stage = [&](const std::string& name) {
    report.stage_trace.push_back(name);
    if (engine_->options().instrument != nullptr) {
      std::ostringstream os;
      os << "event=stage frame=" << frame_ << " name=" << name;
      engine_->log_line(os.str());
    }
  };

  // Soup positions at the start of the step.
  std::vector<Vec3> soup_begin(state_.x);
  std::vector<Vec3> soup_end_velocity(static_cast<std::size_t>(p), Vec3::Zero());
  std::vector<std::vector<Vec3>> obstacle_begin, obstacle_end;
  for (const auto& obstacle : obstacles_) {
    obstacle_begin.push_back(obstacle.positions_at(state_.time));
    obstacle_end.push_back(obstacle.positions_at(state_.time + dt));
  }
  for (std::size_t o = 0; o < obstacles_.size(); ++o) {
    soup_begin.insert(soup_begin.end(), obstacle_begin[o].begin(), obstacle_begin[o].end());
    for (std::size_t v = 0; v < obstacle_begin[o].size(); ++v) {
      soup_end_velocity.push_back((obstacle_end[o][v] - obstacle_begin[o][v]) / dt);
    }
  }
  std::vector<Vec3> soup_velocity(state_.v);
  soup_velocity.resize(soup_begin.size(), Vec3::Zero());
  for (std::size_t i = static_cast<std::size_t>(p); i < soup_begin.size(); ++i) {
    soup_velocity[i] = soup_end_velocity[i];
  }

  // 1. Proximity DCD on the current configuration.
  CollideTimes ct;
  log_stage("proximity_dcd");
  const auto dcd = collide(*engine_, soup_, soup_begin, soup_begin, CollisionMode::Discrete,
                           config_.collision, &ct);
  report.proximities = static_cast<int>(dcd.proximities.size());

  // 2. Contact elements + system assembly.
  log_stage("assemble");
  const auto t_int0 = std::chrono::steady_clock::now();
  std::vector<double> soup_mass(mesh_.vertex_mass);
  soup_mass.resize(soup_begin.size(), 1.0);
  auto contacts = proximities_to_elements(dcd.proximities, soup_, soup_begin, soup_velocity,
                                          soup_mass, dt, config_.contact);
  report.contacts = static_cast<int>(contacts.size());
  auto system = step_system<Real>(*engine_, mesh_, state_, config_.material, pinned_,
                                  std::move(contacts), dt, config_.gravity, config_.wind);

  // 3. PCG solve for dv.
  log_stage("solve");
  DistVector<Real> dv(engine_.get(), system.matrix.partitions);
  const auto pcg = pcg_solve(*engine_, system.matrix, schedule_, system.rhs, dv, config_.solver);
  report.pcg_iterations = pcg.iterations;
  report.pcg_residual = pcg.rel_residual;
  report.integrate_ms = ms_since(t_int0);
  if (!pcg.converged) {
    throw SolverError("frame " + std::to_string(frame_) + ": PCG did not converge (residual " +
                      std::to_string(pcg.rel_residual) + ")");
  }

  // 4. Candidate update.
  log_stage("candidate");
  const auto dv_global = dv.gather();
  std::vector<Vec3> v_cand(state_.v);
  for (int i = 0; i < p; ++i) {
    for (int c = 0; c < 3; ++c) {
      v_cand[static_cast<std::size_t>(i)][c] += static_cast<double>(dv_global[static_cast<std::size_t>(3 * i + c)]);
    }
  }
  std::vector<Vec3> soup_candidate(soup_begin);
  for (int i = 0; i < p; ++i) {
    soup_candidate[static_cast<std::size_t>(i)] = state_.x[static_cast<std::size_t>(i)] + dt * v_cand[static_cast<std::size_t>(i)];
  }
  for (std::size_t o = 0, cursor = static_cast<std::size_t>(p); o < obstacles_.size(); ++o) {
    for (const auto& pos : obstacle_end[o]) soup_candidate[cursor++] = pos;
  }
  const std::vector<Vec3> pre_zone_candidate = soup_candidate;

  // 5-6. CCD + impact zone resolution (resolve_zones loops CCD until clean).
  log_stage("ccd");
  log_stage("zones");
  const auto t_zones0 = std::chrono::steady_clock::now();
  CollideTimes zone_ct;
  const auto zr = resolve_zones(*engine_, soup_, soup_begin, soup_candidate, soup_mass,
                                config_.collision, config_.zones, &zone_ct);
  report.impacts = zr.first_round_impacts;
  report.zone_count = zr.zone_count;
  report.zone_outer = zr.outer_iterations;
  report.zones_ms = ms_since(t_zones0) - (zone_ct.grid_seconds + zone_ct.narrow_seconds) * 1e3;

  // 7. Commit: positions, velocity correction for moved vertices.
  log_stage("commit");
  for (int i = 0; i < p; ++i) {
    const Vec3 corrected = soup_candidate[static_cast<std::size_t>(i)];
    const Vec3 cand = pre_zone_candidate[static_cast<std::size_t>(i)];
    if (corrected != cand) {
      v_cand[static_cast<std::size_t>(i)] += (corrected - cand) / dt;
    }
    state_.x[static_cast<std::size_t>(i)] = corrected;
    state_.v[static_cast<std::size_t>(i)] = v_cand[static_cast<std::size_t>(i)];
  }
  state_.time += dt;
  frame_ += 1;
  report.committed = true;

  report.broad_ms = (ct.grid_seconds + zone_ct.grid_seconds) * 1e3;
  report.narrow_ms = (ct.narrow_seconds + zone_ct.narrow_seconds) * 1e3;

  if (report.stage_trace != canonical_stage_order()) {
    throw ExecError("frame " + std::to_string(report.frame) + ": stage order violated");
  }
  return report;
}

template FrameReport Simulator::step_impl<double>();
template FrameReport Simulator::step_impl<float>();

}  // namespace weft
