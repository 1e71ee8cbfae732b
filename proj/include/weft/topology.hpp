#pragma once

#include "weft/common.hpp"

#include <vector>

namespace weft {

/// One receive task: the owning device receives sub-vector `vec` from
/// device `peer`.
struct QueueNode {
  int peer = -1;
  int vec = -1;

  friend bool operator==(const QueueNode&, const QueueNode&) = default;
};

/// Ordered receive schedule for one device. Node k belongs to transfer
/// stage k; stages are synchronized across all queues.
struct WorkQueue {
  int owner = -1;
  std::vector<QueueNode> nodes;
};

/// Binary fat-tree interconnect over `device_count` leaves. The switch
/// hierarchy is implicit in the power-of-two structure: the switch over
/// [lo, hi) splits at mid = (lo + hi) / 2. `link_costs[l]` is the cost of
/// moving one sub-vector across a boundary at tree level l (0 = root).
struct FatTree {
  int device_count = 1;
  std::vector<double> link_costs;

  static FatTree make(int devices, std::vector<double> link_costs = {});

  int levels() const;  // number of switch levels (log2 n)
};

/// Per-device cost model for the accumulative-overhead recurrences.
/// compute_costs[i] is the cost of the i-th sub-block product in queue
/// order; transfer_costs[i-1] is the cost of the i-th receive.
struct CostModel {
  std::vector<double> compute_costs;   // C_0 .. C_{n-1}
  std::vector<double> transfer_costs;  // T_1 .. T_{n-1}
};

/// Generate the all-to-all receive schedules for a fat-tree. Throws
/// TopologyError unless device_count is a power of two. Every queue has
/// length n-1 and each sub-vector crosses each switch boundary exactly once.
std::vector<WorkQueue> generate_work_queues(const FatTree& tree);

/// Stage-by-stage replay of a schedule. held[stage][device] is the set of
/// sub-vector indices the device holds after that stage (held[0] is the
/// initial state). Throws ScheduleError on any illegal transfer, i.e. a
/// node whose peer does not hold the requested sub-vector at that stage.
struct ReplayResult {
  std::vector<std::vector<std::vector<bool>>> held;
  // crossings[switch][vec] = number of times `vec` crossed that switch's
  // mid boundary, switches indexed in preorder over the implicit tree.
  std::vector<std::vector<int>> boundary_crossings;
  int stages = 0;
};

ReplayResult replay_schedule(const std::vector<WorkQueue>& queues, int device_count);

/// Accumulative overhead of the straightforward implementation:
/// S_i = sum_{j=1..i} T_j + sum_{j=0..i} C_j.
double cost_straightforward(const CostModel& model, int i);

/// Accumulative overhead with compute/transfer interleaving:
/// S_0 = C_0, S_i = max(S_{i-1}, sum_{j=1..i} T_j) + C_i.
double cost_pipelined(const CostModel& model, int i);

}  // namespace weft
