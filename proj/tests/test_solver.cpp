#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle/physics_oracle.hpp"
#include "oracle/sparse_oracle.hpp"
#include "weft/physics.hpp"
#include "weft/solver.hpp"

using namespace weft;

namespace {

struct DistProblem {
  PartitionedMatrix<double> matrix;
  std::vector<DevicePartition> parts;
};

DistProblem distribute(const BellMatrix<double>& global, int n) {
  DistProblem p;
  p.parts = make_partitions(global.block_rows(), n);
  p.matrix = partition_matrix(global, p.parts);
  return p;
}

DistVector<double> scatter(Engine& engine, const std::vector<DevicePartition>& parts,
                           std::span<const double> global) {
  DistVector<double> v(&engine, parts);
  for (const auto& part : parts) {
    auto local = v.local(part.device_id);
    for (int i = 0; i < 3 * part.size(); ++i) local[static_cast<std::size_t>(i)] = global[static_cast<std::size_t>(3 * part.begin + i)];
  }
  return v;
}

// Random SPD block system: A = B^T B + eps I from a random sparse B.
BellMatrix<double> random_spd(oracle::Rng& rng, int block_rows) {
  const auto b = oracle::bell_to_dense(oracle::random_bell(rng, block_rows, 2));
  Eigen::MatrixXd a = b.transpose() * b + 0.5 * Eigen::MatrixXd::Identity(b.rows(), b.cols());
  std::vector<BlockEntry<double>> entries;
  for (int i = 0; i < block_rows; ++i) {
    for (int j = 0; j < block_rows; ++j) {
      const Eigen::Matrix3d blk = a.block<3, 3>(3 * i, 3 * j);
      if (blk.cwiseAbs().maxCoeff() == 0.0) continue;
      BlockEntry<double> e;
      e.row = i;
      e.col = j;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) e.m[static_cast<std::size_t>(3 * r + c)] = blk(r, c);
      }
      entries.push_back(e);
    }
  }
  return BellMatrix<double>::from_entries(block_rows, entries);
}

}  // namespace

TEST_CASE("identity system converges in one iteration with x = b") {
  Engine engine(1);
  auto prob = distribute(BellMatrix<double>::identity(3), 1);
  ValidatedSchedule sched;

  std::vector<double> bg = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto b = scatter(engine, prob.parts, bg);
  DistVector<double> x(&engine, prob.parts);
  const auto report = pcg_solve(engine, prob.matrix, sched, b, x, PcgConfig{});
  CHECK(report.converged);
  CHECK(report.iterations == 1);
  CHECK(x.gather() == bg);
}

TEST_CASE("hand-solved 2x2 SPD system") {
  // [[4,1],[1,3]] x = [1,2] => x = (1/11, 7/11). Embedded in one 3x3 block
  // with a decoupled unit third axis.
  std::vector<BlockEntry<double>> entries;
  BlockEntry<double> e;
  e.row = 0;
  e.col = 0;
  e.m = {4, 1, 0, 1, 3, 0, 0, 0, 1};
  entries.push_back(e);
  const auto a = BellMatrix<double>::from_entries(1, entries);

  Engine engine(1);
  auto prob = distribute(a, 1);
  ValidatedSchedule sched;
  std::vector<double> bg = {1, 2, 0};
  auto b = scatter(engine, prob.parts, bg);
  DistVector<double> x(&engine, prob.parts);
  PcgConfig config;
  config.rel_tolerance = 1e-12;
  const auto report = pcg_solve(engine, prob.matrix, sched, b, x, config);
  CHECK(report.converged);
  const auto xs = x.gather();
  CHECK(xs[0] == doctest::Approx(1.0 / 11.0).epsilon(1e-10));
  CHECK(xs[1] == doctest::Approx(7.0 / 11.0).epsilon(1e-10));
  CHECK(xs[2] == 0.0);
}

TEST_CASE("random SPD systems: converges and matches the dense direct solve") {
  oracle::Rng rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    const int rows = rng.uniform_int(2, 30);
    const auto global = random_spd(rng, rows);
    const auto dense = oracle::bell_to_dense(global);

    std::vector<double> bg(static_cast<std::size_t>(3 * rows));
    for (auto& v : bg) v = rng.uniform(-1, 1);
    Eigen::Map<const Eigen::VectorXd> be(bg.data(), 3 * rows);
    const Eigen::VectorXd x_direct = Eigen::LLT<Eigen::MatrixXd>(dense).solve(be);

    for (int n : {1, 2, 4}) {
      CAPTURE(trial);
      CAPTURE(n);
      Engine engine(n);
      auto prob = distribute(global, n);
      ValidatedSchedule sched = n == 1 ? ValidatedSchedule()
                                       : ValidatedSchedule(generate_work_queues(FatTree::make(n)), n);
      auto b = scatter(engine, prob.parts, bg);
      DistVector<double> x(&engine, prob.parts);
      PcgConfig config;
      config.rel_tolerance = 1e-10;
      const auto report = pcg_solve(engine, prob.matrix, sched, b, x, config);
      REQUIRE(report.converged);

      const auto xs = x.gather();
      const double scale = std::max(1e-12, x_direct.cwiseAbs().maxCoeff());
      for (int i = 0; i < 3 * rows; ++i) {
        CHECK(std::abs(xs[static_cast<std::size_t>(i)] - x_direct(i)) <= 1e-6 * scale);
      }
    }
  }
}

TEST_CASE("partition count does not change the solution beyond 1e-8") {
  oracle::Rng rng(32);
  const int rows = 22;
  const auto global = random_spd(rng, rows);
  std::vector<double> bg(static_cast<std::size_t>(3 * rows));
  for (auto& v : bg) v = rng.uniform(-1, 1);

  std::vector<std::vector<double>> solutions;
  for (int n : {1, 2, 4}) {
    Engine engine(n);
    auto prob = distribute(global, n);
    ValidatedSchedule sched = n == 1 ? ValidatedSchedule()
                                     : ValidatedSchedule(generate_work_queues(FatTree::make(n)), n);
    auto b = scatter(engine, prob.parts, bg);
    DistVector<double> x(&engine, prob.parts);
    PcgConfig config;
    config.rel_tolerance = 1e-10;
    REQUIRE(pcg_solve(engine, prob.matrix, sched, b, x, config).converged);
    solutions.push_back(x.gather());
  }
  double scale = 0.0;
  for (double v : solutions[0]) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < solutions[0].size(); ++i) {
    CHECK(std::abs(solutions[0][i] - solutions[1][i]) <= 1e-8 * scale);
    CHECK(std::abs(solutions[0][i] - solutions[2][i]) <= 1e-8 * scale);
  }
}

TEST_CASE("repeated solves with identical order are bitwise identical") {
  oracle::Rng rng(33);
  const auto global = random_spd(rng, 17);
  std::vector<double> bg(static_cast<std::size_t>(3 * 17));
  for (auto& v : bg) v = rng.uniform(-1, 1);

  Engine engine(4);
  auto prob = distribute(global, 4);
  ValidatedSchedule sched(generate_work_queues(FatTree::make(4)), 4);
  auto b = scatter(engine, prob.parts, bg);
  DistVector<double> x1(&engine, prob.parts), x2(&engine, prob.parts);
  pcg_solve(engine, prob.matrix, sched, b, x1, PcgConfig{});
  pcg_solve(engine, prob.matrix, sched, b, x2, PcgConfig{});
  CHECK(x1.gather() == x2.gather());
}

TEST_CASE("preconditioned residual norm is monotone on small SPD systems") {
  oracle::Rng rng(34);
  for (int trial = 0; trial < 4; ++trial) {
    const auto global = random_spd(rng, rng.uniform_int(3, 10));
    std::vector<double> bg(static_cast<std::size_t>(3 * global.block_rows()));
    for (auto& v : bg) v = rng.uniform(-1, 1);

    Engine engine(1);
    auto prob = distribute(global, 1);
    ValidatedSchedule sched;
    auto b = scatter(engine, prob.parts, bg);
    DistVector<double> x(&engine, prob.parts);
    PcgConfig config;
    config.rel_tolerance = 1e-12;
    const auto report = pcg_solve(engine, prob.matrix, sched, b, x, config);
    for (std::size_t i = 1; i < report.precond_norm_history.size(); ++i) {
      CHECK(report.precond_norm_history[i] <= report.precond_norm_history[i - 1] * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("zero rhs returns zero immediately") {
  Engine engine(1);
  auto prob = distribute(BellMatrix<double>::identity(4), 1);
  ValidatedSchedule sched;
  DistVector<double> b(&engine, prob.parts), x(&engine, prob.parts);
  const auto report = pcg_solve(engine, prob.matrix, sched, b, x, PcgConfig{});
  CHECK(report.converged);
  CHECK(report.iterations == 0);
  for (double v : x.gather()) CHECK(v == 0.0);
}

TEST_CASE("non-SPD matrix raises a solver error") {
  std::vector<BlockEntry<double>> entries;
  BlockEntry<double> e;
  e.row = 0;
  e.col = 0;
  e.m = {-1, 0, 0, 0, -1, 0, 0, 0, -1};
  entries.push_back(e);
  const auto a = BellMatrix<double>::from_entries(1, entries);
  Engine engine(1);
  auto prob = distribute(a, 1);
  ValidatedSchedule sched;
  std::vector<double> bg = {1, 1, 1};
  auto b = scatter(engine, prob.parts, bg);
  DistVector<double> x(&engine, prob.parts);
  PcgConfig config;
  config.preconditioner = Preconditioner::None;
  CHECK_THROWS_AS(pcg_solve(engine, prob.matrix, sched, b, x, config), SolverError);
}

TEST_CASE("assembled cloth system: PCG matches dense direct solve") {
  oracle::Rng rng(35);
  auto mesh = oracle::random_cloth(rng, 7);
  const int p = mesh.vertex_count();
  SimState state = SimState::rest(mesh);
  for (auto& v : state.v) v = rng.vec3(-0.3, 0.3);
  std::vector<std::uint8_t> pinned(static_cast<std::size_t>(p), 0);
  pinned[0] = 1;

  Engine engine(2);
  const auto sys = step_system<double>(engine, mesh, state, MaterialParams{}, pinned, {}, 1.0 / 150.0,
                                       Vec3(0, 0, -9.81), Vec3::Zero());

  // Dense oracle from the gathered system.
  const auto dense = oracle::bell_to_dense(gather_matrix(sys.matrix));
  const auto bg = sys.rhs.gather();
  Eigen::Map<const Eigen::VectorXd> be(bg.data(), static_cast<Eigen::Index>(bg.size()));
  const Eigen::VectorXd x_direct = Eigen::LLT<Eigen::MatrixXd>(dense).solve(be);

  ValidatedSchedule sched(generate_work_queues(FatTree::make(2)), 2);
  DistVector<double> x(&engine, sys.matrix.partitions);
  PcgConfig config;
  config.rel_tolerance = 1e-10;
  const auto report = pcg_solve(engine, sys.matrix, sched, sys.rhs, x, config);
  REQUIRE(report.converged);
  CHECK(report.iterations <= 400);

  const auto xs = x.gather();
  const double scale = std::max(1e-12, x_direct.cwiseAbs().maxCoeff());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(std::abs(xs[i] - x_direct(static_cast<Eigen::Index>(i))) <= 1e-6 * scale);
  }
}
