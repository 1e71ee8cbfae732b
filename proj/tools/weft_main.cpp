// weft: deterministic multi-device cloth simulation engine.
//
// Subcommands: simulate (run a scene), verify (oracle self-checks),
// bench (device scaling table), costs (transfer cost model table),
// inspect (schedules, matrices, impacts).

#include <CLI11.hpp>

#include "oracle/collision_oracle.hpp"
#include "oracle/physics_oracle.hpp"
#include "oracle/sparse_oracle.hpp"
#include "weft/driver.hpp"
#include "weft/scene.hpp"
#include "weft/solver.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace weft;

namespace {

struct SceneOverrides {
  int devices = 0;
  int frames = 0;
  double dt = 0.0;
  std::string precision;
  double cell_scale = 0.0;
  double thickness = 0.0;
  double link_latency = 0.0;
  std::uint64_t seed = 0;
  bool seed_set = false;

  void apply(Scene& scene) const {
    if (devices > 0) scene.config.devices = devices;
    if (frames > 0) scene.config.frames = frames;
    if (dt > 0.0) scene.config.dt = dt;
    if (!precision.empty()) {
      scene.config.precision = precision == "single" ? Precision::Single : Precision::Double;
    }
    if (cell_scale > 0.0) scene.config.collision.cell_scale = cell_scale;
    if (thickness > 0.0) scene.config.collision.thickness = thickness;
    if (link_latency > 0.0) scene.config.link_latency = link_latency;
    if (seed_set) scene.config.seed = seed;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--devices", devices, "logical device count (power of two)");
    cmd->add_option("--frames", frames, "frame count override");
    cmd->add_option("--dt", dt, "time step override (seconds)");
    cmd->add_option("--precision", precision, "single|double")
        ->check(CLI::IsMember({"single", "double", ""}));
    cmd->add_option("--cell-scale", cell_scale, "hash cell size / mean triangle box diagonal");
    cmd->add_option("--thickness", thickness, "collision thickness h (meters)");
    cmd->add_option("--link-latency", link_latency, "injected per-transfer latency (seconds)");
    cmd->add_option("--seed", seed, "seed recorded in reports and used by verify")
        ->each([this](const std::string&) { seed_set = true; });
  }
};

int run_simulate(const std::string& scene_path, const SceneOverrides& overrides,
                 const std::string& out_dir, const std::string& instrument_path) {
  Scene scene = load_scene(scene_path);
  overrides.apply(scene);

  std::ofstream instrument;
  std::ostream* instrument_sink = nullptr;
  if (!instrument_path.empty()) {
    instrument.open(instrument_path);
    if (!instrument) throw SceneError("cannot open instrumentation log: " + instrument_path);
    instrument_sink = &instrument;
  }

  fs::create_directories(out_dir);
  Simulator sim(scene.cloth, scene.pinned, scene.obstacles, scene.config, instrument_sink);

  RunReport run;
  run.devices = scene.config.devices;
  const auto t0 = std::chrono::steady_clock::now();
  for (int f = 0; f < scene.config.frames; ++f) {
    FrameReport report;
    try {
      report = sim.step();
    } catch (const Error& e) {
      std::cerr << "frame " << f << " failed: " << e.what() << "\n";
      std::ofstream csv(fs::path(out_dir) / "report.csv");
      run.write_csv(csv);
      return 1;
    }
    run.frames.push_back(report);

    char name[64];
    std::snprintf(name, sizeof name, "frame_%04d.obj", f);
    save_obj((fs::path(out_dir) / name).string(), sim.state().x, sim.mesh().triangles);
  }
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ofstream csv(fs::path(out_dir) / "report.csv");
  run.write_csv(csv);
  std::cout << scene.name << ": " << scene.config.frames << " frames committed in " << run.wall_seconds
            << " s (devices=" << scene.config.devices << ")\n";
  return 0;
}

int run_costs(const std::vector<double>& compute, const std::vector<double>& transfer,
              std::ostream& os) {
  if (transfer.size() + 1 != compute.size()) {
    std::cerr << "costs: need |transfer| = |compute| - 1\n";
    return 2;
  }
  CostModel model{compute, transfer};
  os << "i,S_straightforward,S_pipelined\n";
  for (int i = 0; i < static_cast<int>(compute.size()); ++i) {
    os << i << ',' << cost_straightforward(model, i) << ',' << cost_pipelined(model, i) << '\n';
  }
  return 0;
}

int run_bench(const std::string& scene_path, const SceneOverrides& overrides,
              const std::vector<int>& device_list, std::ostream& os) {
  os << "devices,frames,wall_s,integrate_ms,broad_ms,narrow_ms,zones_ms,speedup\n";
  double base_wall = 0.0;
  for (int n : device_list) {
    Scene scene = load_scene(scene_path);
    overrides.apply(scene);
    scene.config.devices = n;
    Simulator sim(scene.cloth, scene.pinned, scene.obstacles, scene.config);

    double integrate = 0, broad = 0, narrow = 0, zones = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int f = 0; f < scene.config.frames; ++f) {
      const auto r = sim.step();
      integrate += r.integrate_ms;
      broad += r.broad_ms;
      narrow += r.narrow_ms;
      zones += r.zones_ms;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (base_wall == 0.0) base_wall = wall;
    os << n << ',' << scene.config.frames << ',' << wall << ',' << integrate << ',' << broad << ','
       << narrow << ',' << zones << ',' << base_wall / wall << '\n';
  }
  return 0;
}

int run_verify(std::uint64_t seed, std::ostream& os) {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    os << (ok ? "ok " : "FAIL ") << name << '\n';
    failures += ok ? 0 : 1;
  };

  {  // work queues replay cleanly and cross every boundary once
    bool ok = true;
    for (int n : {2, 4, 8, 16, 32}) {
      const auto queues = generate_work_queues(FatTree::make(n));
      const auto replay = replay_schedule(queues, n);
      for (const auto& per_switch : replay.boundary_crossings) {
        for (int v = 0; v < n; ++v) ok = ok && per_switch[static_cast<std::size_t>(v)] == 1;
      }
    }
    check("work-queue replay (n=2..32)", ok);
  }

  {  // pipelined cost never above straightforward
    oracle::Rng rng(seed + 1);
    bool ok = true;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 1 << rng.uniform_int(0, 5);
      CostModel m;
      for (int i = 0; i < n; ++i) m.compute_costs.push_back(rng.uniform(0, 10));
      for (int i = 1; i < n; ++i) m.transfer_costs.push_back(rng.uniform(0, 10));
      for (int i = 0; i < n; ++i) ok = ok && cost_pipelined(m, i) <= cost_straightforward(m, i) + 1e-12;
    }
    check("cost model property (1000 random models)", ok);
  }

  {  // pipelined SpMV bitwise-equals the order-matched serial oracle
    oracle::Rng rng(seed + 2);
    bool ok = true;
    for (int trial = 0; trial < 30 && ok; ++trial) {
      const int n = trial % 2 == 0 ? 2 : 4;
      Engine engine(n);
      ValidatedSchedule sched(generate_work_queues(FatTree::make(n)), n);
      const int rows = rng.uniform_int(n, 60);
      const auto global = oracle::random_bell(rng, rows, 3);
      const auto parts = make_partitions(rows, n);
      const auto split = partition_matrix(global, parts);
      std::vector<double> xg(static_cast<std::size_t>(3 * rows));
      for (auto& v : xg) v = rng.uniform(-1, 1);
      DistVector<double> x(&engine, parts), y(&engine, parts);
      for (int d = 0; d < n; ++d) {
        const auto& part = parts[static_cast<std::size_t>(d)];
        std::copy(xg.begin() + 3 * part.begin, xg.begin() + 3 * part.end, x.local(d).begin());
      }
      SpmvWorkspace<double> ws(n, split.padded_len);
      spmv_pipelined(engine, split, sched, x, y, ws);
      ok = y.gather() == oracle::spmv_partitioned_serial<double>(split, sched, xg);
    }
    check("pipelined SpMV vs serial oracle (bitwise)", ok);
  }

  {  // assembly equals dense brute force
    oracle::Rng rng(seed + 3);
    bool ok = true;
    for (int trial = 0; trial < 5 && ok; ++trial) {
      auto mesh = oracle::random_cloth(rng, 6);
      const int p = mesh.vertex_count();
      SimState state = SimState::rest(mesh);
      for (auto& v : state.v) v = rng.vec3(-0.5, 0.5);
      std::vector<std::uint8_t> pinned(static_cast<std::size_t>(p), 0);
      const auto elements = build_elements(mesh, MaterialParams{}, Vec3(0, 0, -9.81), Vec3::Zero());
      std::vector<Vec3> adv(state.x);
      for (int i = 0; i < p; ++i) adv[static_cast<std::size_t>(i)] += 0.01 * state.v[static_cast<std::size_t>(i)];
      SystemInputs in;
      in.elements = elements;
      in.x_current = state.x;
      in.x_advanced = adv;
      in.velocity = state.v;
      in.mass = mesh.vertex_mass;
      in.pinned = pinned;
      in.dt = 0.01;
      const auto expect = oracle::dense_assemble(in, p);
      for (int n : {1, 2, 4}) {
        Engine engine(n);
        const auto parts = make_partitions(p, n);
        const auto sys = fill_matrix<double>(engine, distribute_elements(elements, parts), in, parts);
        const auto dense = oracle::bell_to_dense(gather_matrix(sys.matrix));
        ok = ok && (dense - expect.a).cwiseAbs().maxCoeff() <= 1e-12 * expect.a.cwiseAbs().maxCoeff();
      }
    }
    check("assembly vs dense oracle (n=1,2,4)", ok);
  }

  {  // analytic Jacobians vs finite differences
    oracle::Rng rng(seed + 4);
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
      auto mesh = oracle::random_cloth(rng, 4);
      std::vector<Vec3> x = mesh.rest_positions;
      for (auto& p : x) p += rng.vec3(-0.03, 0.03);
      const auto elements = build_elements(mesh, MaterialParams{}, Vec3::Zero(), Vec3::Zero());
      const auto& e = elements[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(elements.size()) - 1))];
      if (e.kind == ElementKind::External) continue;
      ok = oracle::jacobian_fd_error(e, x, 1e-6) < 1e-4;
    }
    check("force Jacobians vs finite differences", ok);
  }

  {  // collision pipeline equals brute force for n=1,2,4
    oracle::Rng rng(seed + 5);
    bool ok = true;
    for (int trial = 0; trial < 5 && ok; ++trial) {
      const auto scene = oracle::random_two_cloth_scene(rng, 7);
      const auto brute = oracle::brute_force_collide(scene.soup, scene.x_begin, scene.x_end,
                                                     CollisionMode::Continuous, CollisionParams{});
      for (int n : {1, 2, 4}) {
        Engine engine(n);
        const auto got = collide(engine, scene.soup, scene.x_begin, scene.x_end,
                                 CollisionMode::Continuous, CollisionParams{});
        ok = ok && got.impacts.size() == brute.impacts.size();
        for (std::size_t i = 0; ok && i < got.impacts.size(); ++i) {
          ok = got.impacts[i].a == brute.impacts[i].a && got.impacts[i].b == brute.impacts[i].b &&
               std::abs(got.impacts[i].toi - brute.impacts[i].toi) <= 1e-8;
        }
      }
    }
    check("hash-grid collision vs brute force (n=1,2,4)", ok);
  }

  os << (failures == 0 ? "verify: all checks passed\n" : "verify: FAILURES\n");
  return failures == 0 ? 0 : 1;
}

int run_inspect_schedule(int devices, std::ostream& os) {
  const auto queues = generate_work_queues(FatTree::make(devices));
  const auto replay = replay_schedule(queues, devices);
  os << "devices=" << devices << " stages=" << replay.stages << "\n";
  for (const auto& q : queues) {
    os << "Q" << q.owner << ":";
    for (const auto& node : q.nodes) os << " (peer=" << node.peer << ",vec=" << node.vec << ")";
    os << "\n";
  }
  return 0;
}

int run_inspect_matrix(const std::string& scene_path, const SceneOverrides& overrides,
                       std::ostream& os) {
  Scene scene = load_scene(scene_path);
  overrides.apply(scene);
  Simulator sim(scene.cloth, scene.pinned, scene.obstacles, scene.config);

  Engine engine(1);
  const auto sys = step_system<double>(engine, sim.mesh(), sim.state(), scene.config.material,
                                       scene.pinned, {}, scene.config.dt, scene.config.gravity,
                                       scene.config.wind);
  gather_matrix(sys.matrix).dump(os);
  return 0;
}

int run_inspect_impacts(const std::string& scene_path, const SceneOverrides& overrides, int frames,
                        std::ostream& os) {
  Scene scene = load_scene(scene_path);
  overrides.apply(scene);
  Simulator sim(scene.cloth, scene.pinned, scene.obstacles, scene.config);

  // Shared soup topology for the per-frame dumps.
  std::vector<std::array<int, 3>> tris = sim.mesh().triangles;
  int base = sim.mesh().vertex_count();
  std::vector<std::uint8_t> movable(static_cast<std::size_t>(base), 1);
  for (const auto& obstacle : scene.obstacles) {
    for (const auto& t : obstacle.shape.triangles) {
      tris.push_back({t[0] + base, t[1] + base, t[2] + base});
    }
    base += static_cast<int>(obstacle.shape.vertices.size());
    movable.resize(static_cast<std::size_t>(base), 0);
  }
  CollisionSoup soup = CollisionSoup::build(std::move(tris), base, std::move(movable));

  os << "frame,kind,a,b,gap,nx,ny,nz\n";
  os.precision(17);
  Engine engine(1);
  for (int f = 0; f < frames; ++f) {
    sim.step();
    std::vector<Vec3> soup_x = sim.state().x;
    for (const auto& obstacle : scene.obstacles) {
      const auto obs = obstacle.positions_at(sim.state().time);
      soup_x.insert(soup_x.end(), obs.begin(), obs.end());
    }
    const auto result = collide(engine, soup, soup_x, soup_x, CollisionMode::Discrete,
                                scene.config.collision);
    for (const auto& prox : result.proximities) {
      os << f << ',' << (prox.kind == FeatureKind::VertexFace ? "VF" : "EE") << ',' << prox.a << ','
         << prox.b << ',' << prox.gap << ',' << prox.normal.x() << ',' << prox.normal.y() << ','
         << prox.normal.z() << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weft: deterministic multi-device cloth simulation engine"};
  app.require_subcommand(1);

  auto* simulate = app.add_subcommand("simulate", "run a scene and write frame meshes + report");
  std::string scene_path, out_dir = "out", instrument_path;
  SceneOverrides sim_overrides;
  simulate->add_option("scene", scene_path, "scene JSON file")->required();
  simulate->add_option("--out-dir", out_dir, "output directory");
  simulate->add_option("--instrument-log", instrument_path, "line-oriented event log path");
  sim_overrides.attach(simulate);

  auto* verify = app.add_subcommand("verify", "run the seeded oracle suites");
  std::uint64_t verify_seed = 20240810;
  verify->add_option("--seed", verify_seed, "oracle RNG seed");

  auto* bench = app.add_subcommand("bench", "device scaling table for a scene");
  std::string bench_scene, bench_out;
  std::vector<int> device_list{1, 2, 4};
  SceneOverrides bench_overrides;
  bench->add_option("scene", bench_scene, "scene JSON file")->required();
  bench->add_option("--devices-list", device_list, "device counts to benchmark");
  bench->add_option("--out", bench_out, "CSV output path (default stdout)");
  bench_overrides.attach(bench);

  auto* costs = app.add_subcommand("costs", "cost-model table (CSV: i, straightforward, pipelined)");
  std::vector<double> compute_costs, transfer_costs;
  std::string costs_out;
  costs->add_option("--compute", compute_costs, "C_0..C_{n-1}")->required();
  costs->add_option("--transfer", transfer_costs, "T_1..T_{n-1}")->required();
  costs->add_option("--out", costs_out, "CSV output path (default stdout)");

  auto* inspect = app.add_subcommand("inspect", "dump schedules, matrices, impacts");
  auto* ins_schedule = inspect->add_subcommand("schedule", "work queues for n devices");
  int ins_devices = 4;
  ins_schedule->add_option("--devices", ins_devices);
  auto* ins_matrix = inspect->add_subcommand("matrix", "BELL dump of the frame-0 system");
  std::string ins_scene, ins_out;
  SceneOverrides ins_overrides;
  ins_matrix->add_option("scene", ins_scene)->required();
  ins_matrix->add_option("--out", ins_out);
  auto* ins_impacts = inspect->add_subcommand("impacts", "CSV proximity dump per frame");
  std::string imp_scene, imp_out;
  int imp_frames = 1;
  ins_impacts->add_option("scene", imp_scene)->required();
  ins_impacts->add_option("--frames", imp_frames);
  ins_impacts->add_option("--out", imp_out);
  ins_overrides.attach(ins_matrix);
  inspect->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(scene_path, sim_overrides, out_dir, instrument_path);
    if (verify->parsed()) return run_verify(verify_seed, std::cout);
    if (bench->parsed()) {
      if (bench_out.empty()) return run_bench(bench_scene, bench_overrides, device_list, std::cout);
      std::ofstream os(bench_out);
      return run_bench(bench_scene, bench_overrides, device_list, os);
    }
    if (costs->parsed()) {
      if (costs_out.empty()) return run_costs(compute_costs, transfer_costs, std::cout);
      std::ofstream os(costs_out);
      return run_costs(compute_costs, transfer_costs, os);
    }
    if (inspect->parsed()) {
      if (ins_schedule->parsed()) return run_inspect_schedule(ins_devices, std::cout);
      if (ins_matrix->parsed()) {
        if (ins_out.empty()) return run_inspect_matrix(ins_scene, ins_overrides, std::cout);
        std::ofstream os(ins_out);
        return run_inspect_matrix(ins_scene, ins_overrides, os);
      }
      if (ins_impacts->parsed()) {
        if (imp_out.empty()) return run_inspect_impacts(imp_scene, ins_overrides, imp_frames, std::cout);
        std::ofstream os(imp_out);
        return run_inspect_impacts(imp_scene, ins_overrides, imp_frames, os);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
