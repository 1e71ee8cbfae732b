#include "weft/topology.hpp"

#include <algorithm>
#include <bit>

namespace weft {

FatTree FatTree::make(int devices, std::vector<double> link_costs) {
  if (!is_power_of_two(devices)) {
    throw TopologyError("fat-tree requires a power-of-two device count, got " +
                        std::to_string(devices));
  }
  FatTree t;
  t.device_count = devices;
  t.link_costs = std::move(link_costs);
  if (t.link_costs.empty()) {
    t.link_costs.assign(static_cast<std::size_t>(std::max(t.levels(), 1)), 0.0);
  }
  if (static_cast<int>(t.link_costs.size()) < t.levels()) {
    throw TopologyError("link cost table shorter than switch level count");
  }
  return t;
}

int FatTree::levels() const { return std::countr_zero(static_cast<unsigned>(device_count)); }

namespace {

// Recursive three-step generation over the half-open device range [lo, hi).
// Step 1 appends the child schedules verbatim (intra-half exchanges of the
// halves' own sub-vectors), step 2 appends the pairwise cross-boundary
// exchange, step 3 replays the child schedules with the sub-vector index
// offset into the opposite half.
void generate_range(int lo, int hi, std::vector<WorkQueue>& queues) {
  const int size = hi - lo;
  if (size == 1) return;
  const int half = size / 2;
  const int mid = lo + half;

  generate_range(lo, mid, queues);
  generate_range(mid, hi, queues);
  const std::size_t child_len = queues[static_cast<std::size_t>(lo)].nodes.size();

  for (int i = lo; i < mid; ++i) queues[static_cast<std::size_t>(i)].nodes.push_back({i + half, i + half});
  for (int j = mid; j < hi; ++j) queues[static_cast<std::size_t>(j)].nodes.push_back({j - half, j - half});

  for (int i = lo; i < hi; ++i) {
    auto& nodes = queues[static_cast<std::size_t>(i)].nodes;
    const int offset = i < mid ? half : -half;
    for (std::size_t k = 0; k < child_len; ++k) {
      QueueNode node = nodes[k];
      node.vec += offset;
      nodes.push_back(node);
    }
  }
}

// Preorder walk of the implicit switch tree; visit(lo, hi) for every
// internal switch (range size >= 2).
template <class Visit>
void for_each_switch(int n, Visit&& visit) {
  struct Range {
    int lo, hi;
  };
  std::vector<Range> stack{{0, n}};
  while (!stack.empty()) {
    auto [lo, hi] = stack.back();
    stack.pop_back();
    if (hi - lo < 2) continue;
    visit(lo, hi);
    const int mid = lo + (hi - lo) / 2;
    stack.push_back({mid, hi});
    stack.push_back({lo, mid});
  }
}

}  // namespace

std::vector<WorkQueue> generate_work_queues(const FatTree& tree) {
  const int n = tree.device_count;
  if (!is_power_of_two(n)) {
    throw TopologyError("work queue generation requires power-of-two devices, got " +
                        std::to_string(n));
  }
  std::vector<WorkQueue> queues(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) queues[static_cast<std::size_t>(i)].owner = i;
  generate_range(0, n, queues);
  return queues;
}

ReplayResult replay_schedule(const std::vector<WorkQueue>& queues, int device_count) {
  const int n = device_count;
  if (static_cast<int>(queues.size()) != n) {
    throw ScheduleError("expected " + std::to_string(n) + " queues, got " +
                        std::to_string(queues.size()));
  }
  for (int i = 0; i < n; ++i) {
    const auto& q = queues[static_cast<std::size_t>(i)];
    if (q.owner != i) throw ScheduleError("queue " + std::to_string(i) + " has owner " + std::to_string(q.owner));
    if (static_cast<int>(q.nodes.size()) != n - 1) {
      throw ScheduleError("queue " + std::to_string(i) + " has length " +
                          std::to_string(q.nodes.size()) + ", expected " + std::to_string(n - 1));
    }
  }

  // Switch ranges in preorder, for boundary-crossing counts.
  std::vector<std::pair<int, int>> switches;
  for_each_switch(n, [&](int lo, int hi) { switches.emplace_back(lo, hi); });

  ReplayResult result;
  result.stages = n - 1;
  result.boundary_crossings.assign(switches.size(), std::vector<int>(static_cast<std::size_t>(n), 0));

  std::vector<std::vector<bool>> held(static_cast<std::size_t>(n),
                                      std::vector<bool>(static_cast<std::size_t>(n), false));
  for (int i = 0; i < n; ++i) held[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = true;
  result.held.push_back(held);

  for (int stage = 0; stage < n - 1; ++stage) {
    // All receives in a stage read the held-state from the previous stage.
    std::vector<std::vector<bool>> next = held;
    for (int i = 0; i < n; ++i) {
      const QueueNode node = queues[static_cast<std::size_t>(i)].nodes[static_cast<std::size_t>(stage)];
      if (node.peer < 0 || node.peer >= n || node.vec < 0 || node.vec >= n || node.peer == i) {
        throw ScheduleError("stage " + std::to_string(stage + 1) + ": queue " + std::to_string(i) +
                            " has malformed node (" + std::to_string(node.peer) + ", " +
                            std::to_string(node.vec) + ")");
      }
      if (!held[static_cast<std::size_t>(node.peer)][static_cast<std::size_t>(node.vec)]) {
        throw ScheduleError("stage " + std::to_string(stage + 1) + ": device " + std::to_string(i) +
                            " requests sub-vector " + std::to_string(node.vec) + " from device " +
                            std::to_string(node.peer) + " which does not hold it");
      }
      next[static_cast<std::size_t>(i)][static_cast<std::size_t>(node.vec)] = true;

      for (std::size_t s = 0; s < switches.size(); ++s) {
        const auto [lo, hi] = switches[s];
        const int mid = lo + (hi - lo) / 2;
        const bool sender_left = node.peer >= lo && node.peer < mid;
        const bool sender_right = node.peer >= mid && node.peer < hi;
        const bool recv_left = i >= lo && i < mid;
        const bool recv_right = i >= mid && i < hi;
        if ((sender_left && recv_right) || (sender_right && recv_left)) {
          result.boundary_crossings[s][static_cast<std::size_t>(node.vec)] += 1;
        }
      }
    }
    held = std::move(next);
    result.held.push_back(held);
  }
  return result;
}

double cost_straightforward(const CostModel& model, int i) {
  double s = 0.0;
  for (int j = 1; j <= i; ++j) s += model.transfer_costs[static_cast<std::size_t>(j - 1)];
  for (int j = 0; j <= i; ++j) s += model.compute_costs[static_cast<std::size_t>(j)];
  return s;
}

double cost_pipelined(const CostModel& model, int i) {
  double s = model.compute_costs[0];
  double transfer_sum = 0.0;
  for (int j = 1; j <= i; ++j) {
    transfer_sum += model.transfer_costs[static_cast<std::size_t>(j - 1)];
    s = std::max(s, transfer_sum) + model.compute_costs[static_cast<std::size_t>(j)];
  }
  return s;
}

}  // namespace weft
