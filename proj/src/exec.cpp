#include "weft/exec.hpp"

#include <atomic>
#include <barrier>
#include <chrono>
#include <sstream>

namespace weft {

std::vector<DevicePartition> make_partitions(int vertex_count, int devices) {
  if (devices < 1) throw TopologyError("device count must be >= 1");
  if (vertex_count < 0) throw DimensionError("negative vertex count");
  std::vector<DevicePartition> parts(static_cast<std::size_t>(devices));
  const int base = vertex_count / devices;
  const int extra = vertex_count % devices;
  int cursor = 0;
  for (int d = 0; d < devices; ++d) {
    const int size = base + (d < extra ? 1 : 0);
    parts[static_cast<std::size_t>(d)] = {d, cursor, cursor + size};
    cursor += size;
  }
  return parts;
}

int padded_subvector_len(int vertex_count, int devices) {
  return 3 * ((vertex_count + devices - 1) / devices);
}

ValidatedSchedule::ValidatedSchedule(std::vector<WorkQueue> queues, int device_count)
    : n_(device_count), queues_(std::move(queues)) {
  replay_schedule(queues_, n_);  // throws on illegal schedule
  sends_.assign(static_cast<std::size_t>(std::max(0, (n_ - 1) * n_)), Send{});
  for (int stage = 0; stage < n_ - 1; ++stage) {
    std::vector<bool> sent(static_cast<std::size_t>(n_), false);
    for (int i = 0; i < n_; ++i) {
      const QueueNode node = queues_[static_cast<std::size_t>(i)].nodes[static_cast<std::size_t>(stage)];
      if (sent[static_cast<std::size_t>(node.peer)]) {
        throw ScheduleError("stage " + std::to_string(stage + 1) + ": device " +
                            std::to_string(node.peer) + " would send twice");
      }
      sent[static_cast<std::size_t>(node.peer)] = true;
      sends_[static_cast<std::size_t>(stage * n_ + node.peer)] = {i, node.vec};
    }
  }
}

namespace {
thread_local int tl_worker_device = -1;

struct DeviceGuard {
  explicit DeviceGuard(int device) { tl_worker_device = device; }
  ~DeviceGuard() { tl_worker_device = -1; }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace

int current_worker_device() { return tl_worker_device; }

// Persistent pool of 2n threads: workers [0, n) run compute roles (and
// Engine::parallel), workers [n, 2n) run transfer roles during pipelines.
struct Engine::Pool {
  explicit Pool(int thread_count) : states(static_cast<std::size_t>(thread_count)) {
    threads.reserve(static_cast<std::size_t>(thread_count));
    for (int i = 0; i < thread_count; ++i) {
      threads.emplace_back([this, i] { worker_loop(i); });
    }
  }

  ~Pool() {
    {
      std::lock_guard lock(mutex);
      stopping = true;
    }
    cv_work.notify_all();
    for (auto& t : threads) t.join();
  }

  void dispatch(int first, int count, const std::function<void(int)>& fn) {
    {
      std::lock_guard lock(mutex);
      task = &fn;
      task_first = first;
      task_count = count;
      pending = count;
      ++epoch;
      errors.assign(static_cast<std::size_t>(count), nullptr);
    }
    cv_work.notify_all();
    {
      std::unique_lock lock(mutex);
      cv_done.wait(lock, [this] { return pending == 0; });
      task = nullptr;
    }
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (errors[i]) std::rethrow_exception(errors[i]);
    }
  }

  void worker_loop(int id) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int)>* fn = nullptr;
      int index = -1;
      {
        std::unique_lock lock(mutex);
        cv_work.wait(lock, [&] { return stopping || epoch != seen; });
        if (stopping) return;
        seen = epoch;
        if (id >= task_first && id < task_first + task_count) {
          fn = task;
          index = id - task_first;
        }
      }
      if (fn == nullptr) continue;
      std::exception_ptr err = nullptr;
      try {
        (*fn)(index);
      } catch (...) {
        err = std::current_exception();
      }
      {
        std::lock_guard lock(mutex);
        if (err) errors[static_cast<std::size_t>(index)] = err;
        if (--pending == 0) cv_done.notify_all();
      }
    }
  }

  std::vector<std::thread> threads;
  std::vector<int> states;
  std::mutex mutex;
  std::condition_variable cv_work, cv_done;
  const std::function<void(int)>* task = nullptr;
  int task_first = 0;
  int task_count = 0;
  int pending = 0;
  std::uint64_t epoch = 0;
  bool stopping = false;
  std::vector<std::exception_ptr> errors;
};

Engine::Engine(int devices, EngineOptions opts) : n_(devices), opts_(opts) {
  if (devices < 1) throw TopologyError("engine needs at least one device");
  pool_ = std::make_unique<Pool>(2 * devices);
}

Engine::~Engine() = default;

void Engine::run_on_workers(int first, int count, const std::function<void(int)>& fn) {
  pool_->dispatch(first, count, fn);
}

void Engine::parallel(const std::function<void(int)>& fn) {
  std::function<void(int)> wrapped = [&](int device) {
    DeviceGuard guard(device);
    try {
      fn(device);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw ExecError("device " + std::to_string(device) + " failed: " + e.what());
    }
  };
  run_on_workers(0, n_, wrapped);
}

double Engine::all_reduce_sum(std::span<const double> partials) const {
  double sum = 0.0;
  for (const double p : partials) sum += p;
  return sum;
}

void Engine::log_line(const std::string& line) const {
  if (opts_.instrument == nullptr) return;
  std::lock_guard lock(log_mutex_);
  (*opts_.instrument) << line << '\n';
}

void Engine::note_cross_device_read(int owner, int reader) const {
  if (opts_.instrument == nullptr) return;
  std::ostringstream os;
  os << "event=cross_device_read owner=" << owner << " reader=" << reader;
  log_line(os.str());
}

PipelineReport Engine::run_pipelined(const ValidatedSchedule& sched,
                                     const std::function<void(int)>& diagonal_task,
                                     const std::function<void(int, int)>& node_task,
                                     const std::function<void(int, int, int)>& copy_payload) {
  if (sched.devices() != n_) {
    throw ScheduleError("schedule is for " + std::to_string(sched.devices()) + " devices, engine has " +
                        std::to_string(n_));
  }
  const int n = n_;
  const int stages = sched.stages();
  const auto t0 = std::chrono::steady_clock::now();

  PipelineReport report;
  report.makespan.assign(static_cast<std::size_t>(n), 0.0);
  report.events.assign(static_cast<std::size_t>(n), {});
  for (auto& e : report.events) e.resize(static_cast<std::size_t>(n));

  // ready[i*n + v]: device i holds sub-vector v. Guarded by arrival_mutex.
  std::vector<char> ready(static_cast<std::size_t>(n * n), 0);
  std::vector<double> recv_time(static_cast<std::size_t>(n * n), 0.0);
  std::mutex arrival_mutex;
  std::condition_variable arrival_cv;
  for (int i = 0; i < n; ++i) ready[static_cast<std::size_t>(i * n + i)] = 1;

  std::barrier<> stage_barrier(std::max(1, n));
  const double latency = opts_.link_latency_seconds;
  const double watchdog = opts_.watchdog_seconds;

  // A transfer worker keeps attending the stage barrier even after an
  // internal failure; abandoning it would hang the other transfer threads.
  std::mutex transfer_error_mutex;
  std::exception_ptr transfer_error = nullptr;

  auto transfer_role = [&](int device) {
    bool broken = false;
    for (int stage = 0; stage < stages; ++stage) {
      stage_barrier.arrive_and_wait();
      if (broken) continue;
      try {
        const auto send = sched.send_at(stage, device);
        if (latency > 0.0) {
          std::this_thread::sleep_for(std::chrono::duration<double>(latency));
        }
        copy_payload(device, send.receiver, send.vec);
        const double now = seconds_since(t0);
        {
          std::lock_guard lock(arrival_mutex);
          ready[static_cast<std::size_t>(send.receiver * n + send.vec)] = 1;
          recv_time[static_cast<std::size_t>(send.receiver * n + send.vec)] = now;
        }
        arrival_cv.notify_all();
        if (opts_.instrument != nullptr) {
          std::ostringstream os;
          os << "event=transfer stage=" << stage + 1 << " device=" << send.receiver << " peer=" << device
             << " vec=" << send.vec << " t=" << now;
          log_line(os.str());
        }
      } catch (...) {
        broken = true;
        std::lock_guard lock(transfer_error_mutex);
        if (!transfer_error) transfer_error = std::current_exception();
      }
    }
  };

  auto compute_role = [&](int device) {
    DeviceGuard guard(device);
    const WorkQueue* queue = stages > 0 ? &sched.queues()[static_cast<std::size_t>(device)] : nullptr;
    auto& events = report.events[static_cast<std::size_t>(device)];

    events[0].vec = device;
    events[0].compute_begin = seconds_since(t0);
    diagonal_task(device);
    events[0].compute_end = seconds_since(t0);

    for (int k = 0; k < stages; ++k) {
      const int vec = queue->nodes[static_cast<std::size_t>(k)].vec;
      {
        std::unique_lock lock(arrival_mutex);
        const bool ok = arrival_cv.wait_for(lock, std::chrono::duration<double>(watchdog), [&] {
          return ready[static_cast<std::size_t>(device * n + vec)] != 0;
        });
        if (!ok) {
          throw ExecError("watchdog: device " + std::to_string(device) + " timed out waiting for sub-vector " +
                          std::to_string(vec) + " at queue position " + std::to_string(k + 1));
        }
      }
      auto& ev = events[static_cast<std::size_t>(k + 1)];
      ev.vec = vec;
      ev.recv_time = recv_time[static_cast<std::size_t>(device * n + vec)];
      ev.compute_begin = seconds_since(t0);
      node_task(device, k);
      ev.compute_end = seconds_since(t0);
    }
    report.makespan[static_cast<std::size_t>(device)] = seconds_since(t0);
  };

  // Dispatch both roles in one pool round: workers [0, n) compute,
  // workers [n, 2n) transfer. Transfer threads never wait on computes, so
  // a compute failure cannot deadlock the stage barrier.
  std::function<void(int)> role = [&](int worker) {
    if (worker < n) {
      try {
        compute_role(worker);
      } catch (const Error&) {
        throw;
      } catch (const std::exception& e) {
        throw ExecError("device " + std::to_string(worker) + " failed: " + e.what());
      }
    } else {
      transfer_role(worker - n);
    }
  };
  run_on_workers(0, 2 * n, role);
  if (transfer_error) std::rethrow_exception(transfer_error);

  report.wall_seconds = seconds_since(t0);
  return report;
}

}  // namespace weft
