#pragma once

#include "weft/common.hpp"
#include "weft/topology.hpp"

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <thread>
#include <vector>

namespace weft {

/// Contiguous vertex range owned by one device. Ranges are disjoint, cover
/// [0, vertex_count), and differ in size by at most one.
struct DevicePartition {
  int device_id = 0;
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool owns(int vertex) const { return vertex >= begin && vertex < end; }
};

std::vector<DevicePartition> make_partitions(int vertex_count, int devices);

/// Padded sub-vector length shared by all devices: 3 * ceil(p / n) scalars.
int padded_subvector_len(int vertex_count, int devices);

/// A replay-validated schedule plus the per-stage send permutation derived
/// from it. Construction throws ScheduleError if the queues are not legal
/// or if some stage is not a send permutation (full-duplex pairwise model).
class ValidatedSchedule {
public:
  ValidatedSchedule() = default;  // n = 1, no transfers
  explicit ValidatedSchedule(std::vector<WorkQueue> queues, int device_count);

  int devices() const { return n_; }
  int stages() const { return n_ - 1; }
  const std::vector<WorkQueue>& queues() const { return queues_; }

  struct Send {
    int receiver = -1;
    int vec = -1;
  };
  // send_at(stage, sender): the single transfer this device performs.
  const Send& send_at(int stage, int sender) const {
    return sends_[static_cast<std::size_t>(stage * n_ + sender)];
  }

private:
  int n_ = 1;
  std::vector<WorkQueue> queues_;
  std::vector<Send> sends_;
};

struct EngineOptions {
  double link_latency_seconds = 0.0;  // injected per transfer task
  double watchdog_seconds = 60.0;
  std::ostream* instrument = nullptr;  // line-oriented event log, nullable
};

struct PipelineEvent {
  int vec = -1;
  double recv_time = 0.0;  // seconds from run start; 0 for the diagonal task
  double compute_begin = 0.0;
  double compute_end = 0.0;
};

struct PipelineReport {
  std::vector<double> makespan;                    // per device
  std::vector<std::vector<PipelineEvent>> events;  // per device, queue order
  double wall_seconds = 0.0;
};

/// Index of the device whose worker is executing on this thread, or -1 on
/// the control thread. Used by the isolation instrumentation.
int current_worker_device();

/// Engine running n logical devices as OS-thread workers. Devices own
/// contiguous partitions and exchange data only through scheduled explicit
/// transfers; all public entry points are called from one control thread.
class Engine {
public:
  explicit Engine(int devices, EngineOptions opts = {});
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  int devices() const { return n_; }
  const EngineOptions& options() const { return opts_; }
  void set_link_latency(double seconds) { opts_.link_latency_seconds = seconds; }
  void set_instrument(std::ostream* sink) { opts_.instrument = sink; }

  /// Fork-join: runs fn(device) once per device on that device's worker
  /// thread. Rethrows the first failure as ExecError with the device id.
  void parallel(const std::function<void(int)>& fn);

  /// Deterministic reduction: sums partials in ascending device order and
  /// returns the same scalar to every device.
  double all_reduce_sum(std::span<const double> partials) const;

  /// Runs the pipelined exchange: each device executes diagonal_task
  /// immediately, then node_task(device, k) once the k-th scheduled
  /// sub-vector has arrived. Transfers advance stage by stage behind a
  /// barrier; computation overlaps freely with later-stage transfers.
  /// copy_payload(sender, receiver, vec) performs the actual data movement.
  PipelineReport run_pipelined(const ValidatedSchedule& sched,
                               const std::function<void(int device)>& diagonal_task,
                               const std::function<void(int device, int k)>& node_task,
                               const std::function<void(int sender, int receiver, int vec)>& copy_payload);

  void log_line(const std::string& line) const;
  void note_cross_device_read(int owner, int reader) const;

private:
  struct Pool;
  void run_on_workers(int first, int count, const std::function<void(int /*worker*/)>& fn);

  int n_ = 1;
  EngineOptions opts_;
  std::unique_ptr<Pool> pool_;
  mutable std::mutex log_mutex_;
};

/// Distributed vector: one owned slice per device (unpadded; slice i has
/// 3 * partitions[i].size() entries). Cross-device access from inside a
/// parallel region is reported through the engine's instrumentation log.
template <class Real>
class DistVector {
public:
  DistVector() = default;
  DistVector(const Engine* engine, const std::vector<DevicePartition>& parts)
      : engine_(engine) {
    slices_.reserve(parts.size());
    for (const auto& p : parts) slices_.emplace_back(static_cast<std::size_t>(3 * p.size()), Real(0));
  }

  int devices() const { return static_cast<int>(slices_.size()); }

  std::span<Real> local(int device) {
    check(device);
    return slices_[static_cast<std::size_t>(device)];
  }
  std::span<const Real> local(int device) const {
    check(device);
    return slices_[static_cast<std::size_t>(device)];
  }

  /// Gathers all slices into one contiguous vector (control thread only).
  std::vector<Real> gather() const {
    std::vector<Real> out;
    for (const auto& s : slices_) out.insert(out.end(), s.begin(), s.end());
    return out;
  }

  void fill(Real value) {
    for (auto& s : slices_) std::fill(s.begin(), s.end(), value);
  }

private:
  void check(int device) const {
    if (engine_ == nullptr) return;
    const int cur = current_worker_device();
    if (cur >= 0 && cur != device) engine_->note_cross_device_read(device, cur);
  }

  const Engine* engine_ = nullptr;
  std::vector<std::vector<Real>> slices_;
};

}  // namespace weft
