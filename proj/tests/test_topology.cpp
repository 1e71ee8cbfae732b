#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle/oracle.hpp"
#include "weft/topology.hpp"

using namespace weft;

namespace {

bool device_holds_all(const ReplayResult& r, int n) {
  const auto& final = r.held.back();
  for (int i = 0; i < n; ++i) {
    for (int v = 0; v < n; ++v) {
      if (!final[static_cast<std::size_t>(i)][static_cast<std::size_t>(v)]) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("n=2 work queues: single pairwise exchange") {
  const auto queues = generate_work_queues(FatTree::make(2));
  REQUIRE(queues.size() == 2);
  CHECK(queues[0].nodes == std::vector<QueueNode>{{1, 1}});
  CHECK(queues[1].nodes == std::vector<QueueNode>{{0, 0}});

  const auto replay = replay_schedule(queues, 2);
  CHECK(replay.stages == 1);
  CHECK(device_holds_all(replay, 2));
}

TEST_CASE("n=4 work queues match the derived stage-by-stage schedule") {
  const auto queues = generate_work_queues(FatTree::make(4));
  REQUIRE(queues.size() == 4);
  CHECK(queues[0].nodes == std::vector<QueueNode>{{1, 1}, {2, 2}, {1, 3}});
  CHECK(queues[1].nodes == std::vector<QueueNode>{{0, 0}, {3, 3}, {0, 2}});
  CHECK(queues[2].nodes == std::vector<QueueNode>{{3, 3}, {0, 0}, {3, 1}});
  CHECK(queues[3].nodes == std::vector<QueueNode>{{2, 2}, {1, 1}, {2, 0}});

  const auto replay = replay_schedule(queues, 4);
  CHECK(replay.stages == 3);  // three transfer stages for four devices
  CHECK(device_holds_all(replay, 4));

  // Every sub-vector crosses the root boundary exactly once.
  for (int v = 0; v < 4; ++v) CHECK(replay.boundary_crossings[0][static_cast<std::size_t>(v)] == 1);
}

TEST_CASE("generated schedules replay cleanly for n up to 32") {
  for (int n : {2, 4, 8, 16, 32}) {
    CAPTURE(n);
    const auto queues = generate_work_queues(FatTree::make(n));
    for (const auto& q : queues) {
      CHECK(static_cast<int>(q.nodes.size()) == n - 1);
      for (const auto& node : q.nodes) {
        CHECK(node.peer != q.owner);
        CHECK(node.peer >= 0);
        CHECK(node.peer < n);
        CHECK(node.vec >= 0);
        CHECK(node.vec < n);
      }
    }
    const auto replay = replay_schedule(queues, n);
    CHECK(device_holds_all(replay, n));

    // Each stage delivers exactly one new sub-vector per device.
    for (int s = 1; s <= replay.stages; ++s) {
      for (int i = 0; i < n; ++i) {
        int before = 0, after = 0;
        for (int v = 0; v < n; ++v) {
          before += replay.held[static_cast<std::size_t>(s - 1)][static_cast<std::size_t>(i)][static_cast<std::size_t>(v)];
          after += replay.held[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)][static_cast<std::size_t>(v)];
        }
        CHECK(after == before + 1);
      }
    }

    // Every sub-vector crosses every switch boundary exactly once.
    for (const auto& per_switch : replay.boundary_crossings) {
      for (int v = 0; v < n; ++v) CHECK(per_switch[static_cast<std::size_t>(v)] == 1);
    }
  }
}

TEST_CASE("non-power-of-two device counts are rejected") {
  CHECK_THROWS_AS(FatTree::make(3), TopologyError);
  CHECK_THROWS_AS(FatTree::make(0), TopologyError);
  CHECK_THROWS_AS(FatTree::make(-4), TopologyError);
  FatTree t;
  t.device_count = 6;
  CHECK_THROWS_AS(generate_work_queues(t), TopologyError);
}

TEST_CASE("replay rejects a transfer of an unheld sub-vector") {
  auto queues = generate_work_queues(FatTree::make(4));
  // Device 0 asks for v3 from device 2 at stage 1, before device 2 has it.
  queues[0].nodes[0] = {2, 3};
  CHECK_THROWS_AS(replay_schedule(queues, 4), ScheduleError);
  try {
    replay_schedule(queues, 4);
  } catch (const ScheduleError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("stage 1") != std::string::npos);
    CHECK(msg.find("device 0") != std::string::npos);
  }
}

TEST_CASE("straightforward cost Eq-style sums") {
  CostModel m{{1, 1, 1, 1}, {2, 2, 2}};
  CHECK(cost_straightforward(m, 3) == doctest::Approx(10.0));
  CHECK(cost_straightforward(m, 0) == doctest::Approx(1.0));  // i=0: just C_0

  CostModel pure_transfer{{0, 0}, {5}};
  CHECK(cost_straightforward(pure_transfer, 1) == doctest::Approx(5.0));
}

TEST_CASE("pipelined cost recurrence") {
  CostModel m{{1, 1, 1, 1}, {2, 2, 2}};
  CHECK(cost_pipelined(m, 0) == doctest::Approx(1.0));
  CHECK(cost_pipelined(m, 1) == doctest::Approx(3.0));
  CHECK(cost_pipelined(m, 2) == doctest::Approx(5.0));
  CHECK(cost_pipelined(m, 3) == doctest::Approx(7.0));

  // Zero transfer cost collapses to the pure-compute sum.
  CostModel fast{{1, 1, 1, 1}, {0, 0, 0}};
  CHECK(cost_pipelined(fast, 3) == doctest::Approx(4.0));

  // Transfer-dominated regime collapses to sum(T) + C_i.
  CostModel slow{{1, 1}, {100}};
  CHECK(cost_pipelined(slow, 1) == doctest::Approx(101.0));
}

TEST_CASE("pipelined cost never exceeds straightforward cost") {
  oracle::Rng rng(20240811);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 << rng.uniform_int(0, 5);
    CostModel m;
    for (int i = 0; i < n; ++i) m.compute_costs.push_back(rng.uniform(0.0, 10.0));
    for (int i = 1; i < n; ++i) m.transfer_costs.push_back(rng.uniform(0.0, 10.0));
    for (int i = 0; i < n; ++i) {
      CHECK(cost_pipelined(m, i) <= cost_straightforward(m, i) + 1e-12);
    }
  }
}
