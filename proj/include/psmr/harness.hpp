// Replica simulation harness: feeds a total-order log into a scheduler,
// executes dispatched transactions on a worker pool with optional jitter and
// simulated execution cost, and verifies the outcome (exactly-once dispatch,
// per-record ordering, replica digests, liveness timeout).
//
// Execution order is captured with a global atomic tick counter, never wall
// clocks, so the order checks are exact. Replicas of a multi-replica run are
// executed one after another: they are fully isolated by construction, and
// serial execution lets them share the log's transaction objects.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "psmr/batch.hpp"
#include "psmr/cbase.hpp"
#include "psmr/core.hpp"
#include "psmr/index_scheduler.hpp"
#include "psmr/replica_state.hpp"

namespace psmr {

enum class SchedulerKind { kCbase, kBatch, kIndex };

inline const char* scheduler_name(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::kCbase:
      return "cbase";
    case SchedulerKind::kBatch:
      return "batch";
    case SchedulerKind::kIndex:
      return "fast";
  }
  return "?";
}

struct RunConfig {
  SchedulerKind kind = SchedulerKind::kIndex;
  int workers = 1;

  std::size_t hashmap_slots = IndexScheduler::kDefaultSlots;
  std::size_t batch_size = 200;
  std::size_t bitmap_bits = BatchScheduler::kDefaultBitmapBits;
  std::uint64_t hash_seed = 0;

  // Randomized pre-execution delay per dispatched task, to force diverse
  // interleavings in verification runs.
  std::uint32_t jitter_max_us = 0;
  std::uint64_t jitter_seed = 0;

  // Simulated execution cost per transaction (a timed wait, standing in for
  // the response latency real executions carry). Lets worker scaling show up
  // regardless of how many cores the host has.
  std::uint32_t exec_sleep_us = 0;

  // Enqueue the whole log before the workers start draining, i.e. measure
  // the scheduler under a saturated backlog instead of whatever equilibrium
  // a concurrent feeder reaches.
  bool prefeed = false;

  // 0 = auto: 30 s per 100k transactions, 10 s floor.
  std::chrono::milliseconds timeout{0};
};

struct ExecutionTrace {
  static constexpr std::uint64_t kUnset = ~0ULL;

  explicit ExecutionTrace(std::size_t n = 0)
      : start_tick(n, kUnset), end_tick(n, kUnset), worker(n, 0) {}

  std::vector<std::uint64_t> start_tick;
  std::vector<std::uint64_t> end_tick;
  std::vector<std::uint32_t> worker;

  bool executed(std::uint64_t seq) const {
    return start_tick[seq] != kUnset && end_tick[seq] != kUnset;
  }
};

// CSV: replica,seq,worker,start_tick,end_tick
inline void write_trace_csv(const ExecutionTrace& trace, unsigned replica,
                            std::ostream& out, bool header = true) {
  if (header) out << "replica,seq,worker,start_tick,end_tick\n";
  for (std::size_t s = 0; s < trace.start_tick.size(); ++s) {
    out << replica << ',' << s << ',' << trace.worker[s] << ','
        << trace.start_tick[s] << ',' << trace.end_tick[s] << '\n';
  }
}

struct RunResult {
  std::uint64_t digest = 0;
  std::uint64_t exactly_once_violations = 0;
  std::uint64_t order_violations = 0;
  std::uint64_t dispatch_violations = 0;
  std::uint64_t unfinished = 0;
  std::vector<std::uint64_t> stuck_seqs;
  bool timed_out = false;
  double wall_ms = 0.0;
  std::uint64_t comparisons = 0;
  ExecutionTrace trace;

  bool consistent() const {
    return !timed_out && unfinished == 0 && exactly_once_violations == 0 &&
           order_violations == 0 && dispatch_violations == 0;
  }
};

namespace detail {

inline std::chrono::milliseconds effective_timeout(const RunConfig& cfg,
                                                   std::size_t n) {
  if (cfg.timeout.count() > 0) return cfg.timeout;
  const auto scaled = std::chrono::milliseconds(
      static_cast<std::int64_t>(n) * 30'000 / 100'000);
  return std::max(scaled, std::chrono::milliseconds(10'000));
}

template <typename T>
class BlockingQueue {
 public:
  void push(T v) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (closed_) return;  // closed means stop, not drain
      q_.push_back(std::move(v));
    }
    cv_.notify_one();
  }

  // False once the queue is closed; remaining items are abandoned so that
  // an abort stops the workers promptly.
  bool pop(T& out) {
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait(lk, [this] { return !q_.empty() || closed_; });
    if (closed_) return false;
    out = std::move(q_.front());
    q_.pop_front();
    return true;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> q_;
  bool closed_ = false;
};

// Counts how many times each seq was handed to a worker; a second grant is a
// dispatch violation.
class DispatchTally {
 public:
  explicit DispatchTally(std::size_t n)
      : grants_(std::make_unique<std::atomic<std::uint8_t>[]>(n)) {
    for (std::size_t i = 0; i < n; ++i) {
      grants_[i].store(0, std::memory_order_relaxed);
    }
  }
  void grant(std::uint64_t seq) {
    if (grants_[seq].fetch_add(1, std::memory_order_acq_rel) != 0) {
      violations_.fetch_add(1, std::memory_order_relaxed);
    }
  }
  std::uint64_t violations() const {
    return violations_.load(std::memory_order_relaxed);
  }

 private:
  std::unique_ptr<std::atomic<std::uint8_t>[]> grants_;
  std::atomic<std::uint64_t> violations_{0};
};

// Adapters present the three schedulers to one worker loop:
//   feed / finish_feeding   (feeder side)
//   next / members / done   (worker side)
//   wait_done / abort       (harness control)

class IndexAdapter {
 public:
  using Task = Transaction*;

  IndexAdapter(std::size_t total, const RunConfig& cfg)
      : total_(total),
        tally_(total),
        sched_(cfg.hashmap_slots, cfg.hash_seed, [this](Transaction& t) {
          tally_.grant(t.seq());
          intake_.push(&t);
        }) {}

  void feed(Transaction& t) { sched_.submit(t); }

  void finish_feeding() {
    std::lock_guard<std::mutex> lk(mu_);
    fed_ = true;
    if (executed_ == total_) wrap_up_locked();
  }

  bool next(Task& out) { return intake_.pop(out); }

  std::span<Transaction* const> members(const Task& t) const {
    return std::span<Transaction* const>(&t, 1);
  }

  void done(const Task& t) {
    sched_.complete(*t);
    std::lock_guard<std::mutex> lk(mu_);
    ++executed_;
    if (fed_ && executed_ == total_) wrap_up_locked();
  }

  bool wait_done(std::chrono::steady_clock::time_point deadline) {
    std::unique_lock<std::mutex> lk(mu_);
    return done_cv_.wait_until(
        lk, deadline, [this] { return fed_ && executed_ == total_; });
  }

  void abort() {
    intake_.close();
    done_cv_.notify_all();
  }

  bool abort_requested() const { return false; }

  std::uint64_t comparisons() const { return sched_.free_checks(); }
  std::uint64_t dispatch_violations() const { return tally_.violations(); }

 private:
  void wrap_up_locked() {
    intake_.close();
    done_cv_.notify_all();
  }

  std::size_t total_;
  DispatchTally tally_;
  BlockingQueue<Transaction*> intake_;
  IndexScheduler sched_;
  std::mutex mu_;
  std::condition_variable done_cv_;
  std::size_t executed_ = 0;
  bool fed_ = false;
};

class CbaseAdapter {
 public:
  using Task = Transaction*;

  CbaseAdapter(std::size_t total, const RunConfig&) : tally_(total) {}

  void feed(Transaction& t) { sched_.insert(t); }
  void finish_feeding() { sched_.finish_feeding(); }

  bool next(Task& out) {
    out = sched_.acquire();
    if (out == nullptr) return false;
    tally_.grant(out->seq());
    return true;
  }

  std::span<Transaction* const> members(const Task& t) const {
    return std::span<Transaction* const>(&t, 1);
  }

  void done(const Task& t) { sched_.remove(*t); }

  bool wait_done(std::chrono::steady_clock::time_point deadline) {
    return sched_.wait_drained(deadline);
  }
  void abort() { sched_.abort(); }

  std::uint64_t comparisons() const { return sched_.comparisons(); }
  std::uint64_t dispatch_violations() const { return tally_.violations(); }

 private:
  DispatchTally tally_;
  CbaseScheduler sched_;
};

class BatchAdapter {
 public:
  using Task = const Batch*;

  BatchAdapter(std::size_t total, const RunConfig& cfg)
      : tally_(total),
        sched_(cfg.batch_size, cfg.bitmap_bits, cfg.hash_seed) {}

  void feed(Transaction& t) { sched_.add(t); }
  void finish_feeding() { sched_.finish_feeding(); }

  bool next(Task& out) {
    out = sched_.acquire();
    if (out == nullptr) return false;
    for (const Transaction* t : out->members) {
      tally_.grant(t->seq());
    }
    return true;
  }

  std::span<Transaction* const> members(const Task& b) const {
    return std::span<Transaction* const>(b->members.data(),
                                         b->members.size());
  }

  void done(const Task& b) { sched_.remove(*b); }

  bool wait_done(std::chrono::steady_clock::time_point deadline) {
    return sched_.wait_drained(deadline);
  }
  void abort() { sched_.abort(); }

  std::uint64_t comparisons() const { return sched_.comparisons(); }
  std::uint64_t dispatch_violations() const { return tally_.violations(); }

 private:
  DispatchTally tally_;
  BatchScheduler sched_;
};

template <typename Adapter>
RunResult run_with(TotalOrderLog& log, const RunConfig& cfg) {
  const std::size_t n = log.size();
  Adapter adapter(n, cfg);
  ReplicaState state(n);
  RunResult result;
  result.trace = ExecutionTrace(n);
  std::atomic<std::uint64_t> tick{0};
  std::atomic<std::uint64_t> apply_errors{0};
  std::atomic<bool> stop_feeding{false};

  const auto start = std::chrono::steady_clock::now();
  const auto deadline = start + effective_timeout(cfg, n);

  auto worker_fn = [&](int wid) {
    Rng jitter_rng(derive_seed(cfg.jitter_seed, 0x700 + wid));
    typename Adapter::Task task{};
    while (adapter.next(task)) {
      if (cfg.jitter_max_us > 0) {
        std::this_thread::sleep_for(std::chrono::microseconds(
            jitter_rng.bounded(cfg.jitter_max_us + 1)));
      }
      for (Transaction* t : adapter.members(task)) {
        result.trace.start_tick[t->seq()] = tick.fetch_add(1);
        result.trace.worker[t->seq()] = static_cast<std::uint32_t>(wid);
        try {
          state.apply(*t);
        } catch (const std::exception&) {
          apply_errors.fetch_add(1, std::memory_order_relaxed);
        }
        if (cfg.exec_sleep_us > 0) {
          std::this_thread::sleep_for(
              std::chrono::microseconds(cfg.exec_sleep_us));
        }
        result.trace.end_tick[t->seq()] = tick.fetch_add(1);
      }
      adapter.done(task);
    }
  };

  std::vector<std::thread> workers;
  std::thread feeder;
  if (cfg.prefeed) {
    for (std::size_t i = 0; i < n; ++i) {
      adapter.feed(log.at(i));
    }
    adapter.finish_feeding();
  } else {
    feeder = std::thread([&] {
      for (std::size_t i = 0; i < n && !stop_feeding.load(); ++i) {
        adapter.feed(log.at(i));
      }
      adapter.finish_feeding();
    });
  }
  workers.reserve(static_cast<std::size_t>(cfg.workers));
  for (int w = 0; w < cfg.workers; ++w) {
    workers.emplace_back(worker_fn, w);
  }

  const bool completed = adapter.wait_done(deadline);
  if (!completed) {
    stop_feeding.store(true);
    adapter.abort();
  }
  for (std::thread& w : workers) w.join();
  if (feeder.joinable()) feeder.join();
  const auto end = std::chrono::steady_clock::now();

  result.timed_out = !completed;
  result.wall_ms =
      std::chrono::duration<double, std::milli>(end - start).count();
  result.digest = state.digest();
  result.exactly_once_violations = state.over_applied() + apply_errors.load();
  result.order_violations = state.order_violations();
  result.dispatch_violations = adapter.dispatch_violations();
  result.unfinished = state.unapplied();
  result.stuck_seqs = state.unapplied_seqs();
  result.comparisons = adapter.comparisons();
  return result;
}

}  // namespace detail

inline RunResult run_replica(TotalOrderLog& log, const RunConfig& cfg) {
  if (cfg.workers < 1) {
    throw std::invalid_argument("worker count must be >= 1");
  }
  switch (cfg.kind) {
    case SchedulerKind::kCbase:
      return detail::run_with<detail::CbaseAdapter>(log, cfg);
    case SchedulerKind::kBatch:
      return detail::run_with<detail::BatchAdapter>(log, cfg);
    case SchedulerKind::kIndex:
      return detail::run_with<detail::IndexAdapter>(log, cfg);
  }
  throw std::logic_error("unknown scheduler kind");
}

// Aggregated outcome of k isolated replicas consuming the same log.
struct ConsistencyReport {
  std::vector<RunResult> replicas;

  bool digests_match() const {
    for (const RunResult& r : replicas) {
      if (r.digest != replicas.front().digest) return false;
    }
    return true;
  }
  std::uint64_t exactly_once_violations() const {
    std::uint64_t n = 0;
    for (const RunResult& r : replicas) n += r.exactly_once_violations;
    return n;
  }
  std::uint64_t order_violations() const {
    std::uint64_t n = 0;
    for (const RunResult& r : replicas) n += r.order_violations;
    return n;
  }
  std::uint64_t unfinished() const {
    std::uint64_t n = 0;
    for (const RunResult& r : replicas) n += r.unfinished;
    return n;
  }
  bool pass() const {
    if (!digests_match()) return false;
    for (const RunResult& r : replicas) {
      if (!r.consistent()) return false;
    }
    return true;
  }
};

// Runs the same log through `replicas` isolated replica instances. Each
// replica gets its own jitter seed: agreement of the digests is then the
// determinism oracle.
inline ConsistencyReport run_replicas(TotalOrderLog& log, RunConfig cfg,
                                      unsigned replicas) {
  ConsistencyReport report;
  const std::uint64_t base_jitter = cfg.jitter_seed;
  for (unsigned r = 0; r < replicas; ++r) {
    cfg.jitter_seed = derive_seed(base_jitter, 0x5e5e + r);
    report.replicas.push_back(run_replica(log, cfg));
  }
  return report;
}

// ---- Schedule verification -------------------------------------------------

struct VerifyResult {
  bool pass = true;
  std::string message;
};

// Pass iff (a) every transaction executed exactly once per the trace, and
// (b) for every conflicting pair the earlier transaction finished before the
// later one started. The conflict predicate decides what "conflicting"
// means (true record intersection, or slot collisions as well).
template <typename ConflictPred>
VerifyResult verify_schedule(const TotalOrderLog& log,
                             const ExecutionTrace& trace,
                             ConflictPred&& conflicting) {
  VerifyResult v;
  for (std::size_t s = 0; s < log.size(); ++s) {
    if (!trace.executed(s)) {
      v.pass = false;
      v.message = "seq " + std::to_string(s) + " never executed";
      return v;
    }
  }
  for (std::size_t i = 0; i + 1 < log.size(); ++i) {
    for (std::size_t j = i + 1; j < log.size(); ++j) {
      if (!conflicting(log[i], log[j])) continue;
      if (trace.end_tick[i] > trace.start_tick[j]) {
        v.pass = false;
        v.message = "conflicting pair executed out of order: seq " +
                    std::to_string(i) + " vs seq " + std::to_string(j);
        return v;
      }
    }
  }
  return v;
}

// Conflict by true record-set intersection.
struct RecordConflict {
  bool operator()(const Transaction& a, const Transaction& b) const {
    return records_intersect(a, b);
  }
};

// Conflict by slot collision under a given index configuration. Subsumes
// record intersection (equal records always share a slot), so it is the
// right predicate for runs of the index scheduler, where hash collisions
// must serialize too.
class SlotConflict {
 public:
  SlotConflict(const TotalOrderLog& log, std::size_t slot_count,
               std::uint64_t hash_seed) {
    const RecordHasher hasher(hash_seed);
    slot_sets_.reserve(log.size());
    for (const Transaction& t : log) {
      std::vector<std::uint64_t> slots;
      slots.reserve(t.records().size());
      for (const RecordKey& r : t.records()) {
        slots.push_back(hasher(r.bytes) % slot_count);
      }
      std::sort(slots.begin(), slots.end());
      slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
      slot_sets_.push_back(std::move(slots));
    }
  }

  bool operator()(const Transaction& a, const Transaction& b) const {
    const auto& sa = slot_sets_[a.seq()];
    const auto& sb = slot_sets_[b.seq()];
    std::size_t i = 0, j = 0;
    while (i < sa.size() && j < sb.size()) {
      if (sa[i] == sb[j]) return true;
      (sa[i] < sb[j]) ? ++i : ++j;
    }
    return false;
  }

 private:
  std::vector<std::vector<std::uint64_t>> slot_sets_;
};

}  // namespace psmr
