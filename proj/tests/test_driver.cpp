#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle/collision_oracle.hpp"
#include "weft/driver.hpp"
#include "weft/scene.hpp"

#include <sstream>

using namespace weft;

namespace {

SimConfig quiet_config(int devices = 1) {
  SimConfig cfg;
  cfg.devices = devices;
  cfg.dt = 1.0 / 150.0;
  return cfg;
}

}  // namespace

TEST_CASE("flat pinned cloth with no gravity stays at rest") {
  auto mesh = make_grid_mesh(6, 6, 0.3, 0.3, Vec3(0, 0, 0), 0.2);
  SimConfig cfg = quiet_config();
  cfg.gravity = Vec3::Zero();
  const auto rest = mesh.rest_positions;
  Simulator sim(std::move(mesh), std::vector<std::uint8_t>(36, 0), {}, cfg);

  for (int s = 0; s < 3; ++s) {
    const auto report = sim.step();
    CHECK(report.committed);
  }
  for (int v = 0; v < 36; ++v) {
    CHECK((sim.state().x[static_cast<std::size_t>(v)] - rest[static_cast<std::size_t>(v)]).norm() <= 1e-12);
    CHECK(sim.state().v[static_cast<std::size_t>(v)].norm() <= 1e-12);
  }
}

TEST_CASE("single free vertex gains exactly dt*g per step") {
  // Masses chosen so every arithmetic step is exact in binary floating point.
  auto mesh = ClothMesh::from_raw({Vec3(0, 0, 0)}, {}, {1.0});
  SimConfig cfg = quiet_config();
  cfg.dt = 1.0 / 64.0;
  cfg.gravity = Vec3(0, 0, -10.0);
  Simulator sim(std::move(mesh), {0}, {}, cfg);

  const int steps = 8;
  for (int s = 0; s < steps; ++s) sim.step();
  CHECK(sim.state().v[0].z() == steps * cfg.dt * -10.0);
  CHECK(sim.state().v[0].x() == 0.0);
}

TEST_CASE("stage trace follows the canonical pipeline order") {
  auto mesh = make_grid_mesh(4, 4, 0.2, 0.2, Vec3(0, 0, 0), 0.2);
  Simulator sim(std::move(mesh), std::vector<std::uint8_t>(16, 0), {}, quiet_config());
  const auto report = sim.step();
  CHECK(report.stage_trace == canonical_stage_order());
}

TEST_CASE("1-D pinned spring matches the closed-form implicit Euler update") {
  // Two vertices joined by one structural direction of a 2x2 grid strip is
  // messy; instead drive the same path through a tiny two-vertex cloth with
  // an explicit spring via the contact-free system: use a 2-vertex mesh and
  // a manual spring element through step_system.
  const double k = 80.0, m = 0.5, dt = 0.01, rest = 0.5;
  auto mesh = ClothMesh::from_raw({Vec3(0, 0, 0), Vec3(rest, 0, 0)}, {}, {m, m});
  SimState state = SimState::rest(mesh);
  const double stretch0 = 0.06;
  state.x[1].x() += stretch0;  // extend along the axis
  state.v[1].x() = 0.2;

  std::vector<AssemblyElement> spring(1);
  spring[0].kind = ElementKind::Spring;
  spring[0].stencil = {0, 1, -1, -1};
  spring[0].stencil_size = 2;
  spring[0].data = SpringData{rest, k};

  std::vector<std::uint8_t> pinned = {1, 0};
  Engine engine(1);
  MaterialParams params;
  params.damping = 0.0;
  const auto sys = step_system<double>(engine, mesh, state, params, pinned, spring, dt,
                                       Vec3::Zero(), Vec3::Zero());

  ValidatedSchedule sched;
  DistVector<double> dv(&engine, sys.matrix.partitions);
  PcgConfig solver;
  solver.rel_tolerance = 1e-12;
  REQUIRE(pcg_solve(engine, sys.matrix, sched, sys.rhs, dv, solver).converged);
  const auto dvg = dv.gather();

  // Closed form: (m + dt^2 k) dv = dt * (-k (x_adv - rest)).
  const double x_adv = rest + stretch0 + dt * state.v[1].x();
  const double expected = dt * (-k * (x_adv - rest)) / (m + dt * dt * k);
  CHECK(std::abs(dvg[3] - expected) <= 1e-10 * std::max(1.0, std::abs(expected)));
  CHECK(dvg[0] == 0.0);  // pinned vertex never moves
}

TEST_CASE("deterministic: identical runs produce identical trajectories") {
  for (int n : {1, 2}) {
    CAPTURE(n);
    std::vector<std::vector<Vec3>> finals;
    for (int run = 0; run < 2; ++run) {
      auto mesh = make_grid_mesh(8, 8, 0.3, 0.3, Vec3(0, 0, 0.2), 0.2);
      SimConfig cfg = quiet_config(n);
      std::vector<std::uint8_t> pins(64, 0);
      pins[56] = pins[63] = 1;  // top corners
      Simulator sim(std::move(mesh), pins, {}, cfg);
      for (int s = 0; s < 5; ++s) sim.step();
      finals.push_back(sim.state().x);
    }
    for (std::size_t i = 0; i < finals[0].size(); ++i) {
      CHECK(finals[0][i] == finals[1][i]);
    }
  }
}

TEST_CASE("device count changes timings, not trajectories") {
  std::vector<std::vector<Vec3>> finals;
  for (int n : {1, 4}) {
    auto mesh = make_grid_mesh(8, 8, 0.3, 0.3, Vec3(0, 0, 0.2), 0.2);
    SimConfig cfg = quiet_config(n);
    std::vector<std::uint8_t> pins(64, 0);
    pins[56] = pins[63] = 1;
    Simulator sim(std::move(mesh), pins, {}, cfg);
    for (int s = 0; s < 10; ++s) sim.step();
    finals.push_back(sim.state().x);
  }
  double max_rel = 0.0;
  for (std::size_t i = 0; i < finals[0].size(); ++i) {
    const double scale = std::max(1.0, finals[0][i].norm());
    max_rel = std::max(max_rel, (finals[0][i] - finals[1][i]).norm() / scale);
  }
  CHECK(max_rel <= 1e-6);
}

TEST_CASE("single precision mode runs and stays near the double trajectory") {
  std::vector<std::vector<Vec3>> finals;
  for (Precision prec : {Precision::Double, Precision::Single}) {
    auto mesh = make_grid_mesh(6, 6, 0.3, 0.3, Vec3(0, 0, 0.2), 0.2);
    SimConfig cfg = quiet_config(1);
    cfg.precision = prec;
    std::vector<std::uint8_t> pins(36, 0);
    pins[30] = pins[35] = 1;
    Simulator sim(std::move(mesh), pins, {}, cfg);
    for (int s = 0; s < 5; ++s) sim.step();
    finals.push_back(sim.state().x);
  }
  for (std::size_t i = 0; i < finals[0].size(); ++i) {
    CHECK((finals[0][i] - finals[1][i]).norm() <= 1e-3);
  }
}

TEST_CASE("cloth dropped on a sphere commits only penetration-free frames") {
  auto mesh = make_grid_mesh(12, 12, 0.4, 0.4, Vec3(-0.2, -0.2, 0.12), 0.2);
  SimConfig cfg = quiet_config(2);
  cfg.collision.thickness = 0.008;
  cfg.contact.stiffness_scale = 1.0;

  Obstacle sphere;
  sphere.shape = make_uv_sphere(Vec3(0, 0, -0.05), 0.1, 10, 14);
  Simulator sim(std::move(mesh), std::vector<std::uint8_t>(144, 0), {sphere}, cfg);

  // Audit every committed frame with the brute-force CCD oracle.
  for (int s = 0; s < 12; ++s) {
    const std::vector<Vec3> before = sim.state().x;
    const auto report = sim.step();
    REQUIRE(report.committed);

    std::vector<Vec3> soup_before = before;
    std::vector<Vec3> soup_after = sim.state().x;
    const auto obs = sphere.positions_at(0.0);
    soup_before.insert(soup_before.end(), obs.begin(), obs.end());
    soup_after.insert(soup_after.end(), obs.begin(), obs.end());

    CollisionSoup soup = CollisionSoup::build(
        [&] {
          std::vector<std::array<int, 3>> tris = sim.mesh().triangles;
          for (const auto& t : sphere.shape.triangles) {
            tris.push_back({t[0] + 144, t[1] + 144, t[2] + 144});
          }
          return tris;
        }(),
        144 + static_cast<int>(sphere.shape.vertices.size()),
        [&] {
          std::vector<std::uint8_t> movable(static_cast<std::size_t>(144), 1);
          movable.resize(static_cast<std::size_t>(144 + sphere.shape.vertices.size()), 0);
          return movable;
        }());
    const auto audit = oracle::brute_force_collide(soup, soup_before, soup_after,
                                                   CollisionMode::Continuous, cfg.collision);
    CHECK(audit.impacts.empty());
    CHECK(report.zone_outer <= 10);
  }
  // The cloth must actually have fallen onto the sphere and be in contact.
  CHECK(sim.state().x[77].z() < 0.12);
}

TEST_CASE("scene files parse into simulators") {
  const std::string text = R"({
    "name": "mini",
    "dt": 0.005,
    "frames": 3,
    "devices": 2,
    "cloth": {"grid": {"nx": 6, "ny": 6, "width": 0.3, "height": 0.3, "origin": [0, 0, 0.2]},
              "pin_top_edge": true},
    "material": {"stretch": 300, "bend": 1e-5, "density": 0.2},
    "collision": {"thickness": 0.006},
    "obstacles": [{"sphere": {"center": [0.15, 0.15, 0.0], "radius": 0.08},
                   "keyframes": [{"time": 0, "translate": [0, 0, 0]},
                                  {"time": 1, "translate": [0.1, 0, 0]}]}]
  })";
  const auto scene = parse_scene(text);
  CHECK(scene.name == "mini");
  CHECK(scene.config.devices == 2);
  CHECK(scene.cloth.vertex_count() == 36);
  CHECK(scene.obstacles.size() == 1);
  int pins = 0;
  for (auto p : scene.pinned) pins += p;
  CHECK(pins == 6);

  Simulator sim(scene.cloth, scene.pinned, scene.obstacles, scene.config);
  const auto report = sim.step();
  CHECK(report.committed);
}

TEST_CASE("malformed scenes are rejected with context") {
  CHECK_THROWS_AS(parse_scene("{not json"), SceneError);
  CHECK_THROWS_AS(parse_scene(R"({"cloth": {}})"), SceneError);
  CHECK_THROWS_AS(parse_scene(R"({"cloth": {"obj": "does_not_exist.obj"}})"), SceneError);
  CHECK_THROWS_AS(parse_scene(R"({"precision": "half",
                                  "cloth": {"grid": {"nx": 3, "ny": 3}}})"),
                  SceneError);
}

TEST_CASE("obstacle keyframes interpolate rigid motion") {
  Obstacle obs;
  obs.shape.vertices = {Vec3(1, 0, 0)};
  obs.keyframes.push_back({0.0, Vec3::Zero(), Vec3(0, 0, 1), 0.0, Vec3::Zero()});
  obs.keyframes.push_back({1.0, Vec3(0, 0, 1), Vec3(0, 0, 1), M_PI, Vec3::Zero()});

  const auto mid = obs.positions_at(0.5);
  CHECK(mid[0].z() == doctest::Approx(0.5));
  CHECK(mid[0].x() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(mid[0].y() == doctest::Approx(1.0));

  const auto past = obs.positions_at(2.0);  // clamped to the last keyframe
  CHECK(past[0].x() == doctest::Approx(-1.0));
  CHECK(past[0].z() == doctest::Approx(1.0));
}
