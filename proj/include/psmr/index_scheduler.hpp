// Index-based transaction scheduler.
//
// The index is a single-hash record index fused with per-record FIFO queues:
// slot = hash(record) % H, and each slot holds the FIFO of pending
// transactions touching any record that maps there. Dependency detection is
// therefore O(1) per record, and the union of the slot queues is a
// dependency graph reduced to adjacent-pair edges. Two records that collide
// into one slot produce a false dependency; that only serializes the two
// transactions, it never reorders them, so consistency is unaffected.
//
// A transaction is *free* when it sits at the head of every queue it belongs
// to; free transactions are handed to the dispatch sink. submit() is called
// by a single thread in total order; complete() may be called concurrently
// by any number of worker threads. Only one slot is ever locked at a time,
// and the free check takes no locks at all: it reads the per-slot head
// snapshots, which are plain atomics.
//
// Exactly-once dispatch is enforced by the transaction's run flag. The
// submitting thread owns the dispatch right as long as the flag is true; if
// it finds the transaction blocked it parks it (flag -> false), after which
// the right is won by whoever performs the false -> true transition. The
// submitter re-checks after parking, so a completion that raced between its
// head snapshot and the park cannot strand the transaction.

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "psmr/core.hpp"
#include "psmr/hash.hpp"

namespace psmr {

// Interleaving-test hook. The scheduler invokes it at every point where the
// order of shared-memory accesses can matter; a null probe costs one branch.
class SchedulerProbe {
 public:
  enum class Point : std::uint8_t {
    kSlotLock,      // about to acquire a slot guard
    kSlotUnlocked,  // just released a slot guard
    kHeadPeek,      // about to read a slot head snapshot
    kRunClear,      // about to park (run := false)
    kRunClaim,      // about to attempt the false -> true transition
  };
  virtual ~SchedulerProbe() = default;
  virtual void at(Point point, std::uint64_t seq, std::uint64_t slot) = 0;
};

// Optional recorder of scheduler events, dumpable as CSV
// (event,seq,slot,thread).
class EventTrace {
 public:
  enum class Kind : char { kInsert = 'I', kRemove = 'R', kDispatch = 'D' };

  struct Event {
    Kind kind;
    std::uint64_t seq;
    std::uint64_t slot;
    std::uint64_t thread;
  };

  void record(Kind kind, std::uint64_t seq, std::uint64_t slot) {
    const std::uint64_t tid =
        std::hash<std::thread::id>{}(std::this_thread::get_id());
    std::lock_guard<std::mutex> lk(mu_);
    events_.push_back(Event{kind, seq, slot, tid});
  }

  std::vector<Event> snapshot() const {
    std::lock_guard<std::mutex> lk(mu_);
    return events_;
  }

  void write_csv(std::ostream& out) const {
    out << "event,seq,slot,thread\n";
    for (const Event& e : snapshot()) {
      out << static_cast<char>(e.kind) << ',' << e.seq << ',' << e.slot << ','
          << e.thread << '\n';
    }
  }

 private:
  mutable std::mutex mu_;
  std::vector<Event> events_;
};

namespace detail {

class SpinLock {
 public:
  void lock() noexcept {
    int spins = 0;
    while (lock_.test_and_set(std::memory_order_acquire)) {
      if (++spins > 16) {
        std::this_thread::yield();
        spins = 0;
      }
    }
  }
  void unlock() noexcept { lock_.clear(std::memory_order_release); }

 private:
  std::atomic_flag lock_ = ATOMIC_FLAG_INIT;
};

inline thread_local int tls_slot_guards_held = 0;

}  // namespace detail

class IndexScheduler {
 public:
  using Sink = std::function<void(Transaction&)>;

  static constexpr std::size_t kDefaultSlots = 1'024'000;

  IndexScheduler(std::size_t slot_count, std::uint64_t hash_seed, Sink sink,
                 EventTrace* trace = nullptr, SchedulerProbe* probe = nullptr)
      : hasher_(hash_seed),
        slot_count_(slot_count),
        slots_(std::make_unique<Slot[]>(slot_count)),
        sink_(std::move(sink)),
        trace_(trace),
        probe_(probe) {
    if (slot_count_ == 0) {
      throw std::invalid_argument("slot count must be positive");
    }
    if (!sink_) {
      throw std::invalid_argument("dispatch sink must be set");
    }
  }

  std::size_t slot_count() const noexcept { return slot_count_; }
  std::uint64_t hash_seed() const noexcept { return hasher_.seed(); }

  std::uint64_t slot_of(const RecordKey& r) const noexcept {
    return hasher_(r.bytes) % slot_count_;
  }

  // Accepts the next transaction of the total order. Single-threaded caller;
  // seq must be strictly greater than every previously submitted seq.
  void submit(Transaction& t) {
    if (have_last_ && t.seq() <= last_seq_) {
      throw std::logic_error("submit out of order or duplicate: seq " +
                             std::to_string(t.seq()));
    }
    have_last_ = true;
    last_seq_ = t.seq();

    t.run_.store(true);
    for (auto& link : t.links_) {
      link = Transaction::QueueLink{};
    }

    SlotSet touched;
    collect_slots(t, touched);
    for (const auto& [slot_id, record_index] : touched) {
      Slot& s = slots_[slot_id];
      probe(SchedulerProbe::Point::kSlotLock, t.seq(), slot_id);
      {
        SlotGuard g(s);
        push_locked(s, t, record_index);
        if (trace_) trace_->record(EventTrace::Kind::kInsert, t.seq(), slot_id);
      }
      probe(SchedulerProbe::Point::kSlotUnlocked, t.seq(), slot_id);
    }

    if (is_free(t)) {
      dispatch(t);
      return;
    }
    // Blocked behind at least one queue head: hand the dispatch right over.
    probe(SchedulerProbe::Point::kRunClear, t.seq(), 0);
    t.run_.store(false);
    // Re-check: a completion may have drained the blocking queue between the
    // snapshot above and the park. Whoever wins the flag dispatches.
    if (is_free(t)) {
      probe(SchedulerProbe::Point::kRunClaim, t.seq(), 0);
      bool expected = false;
      if (t.run_.compare_exchange_strong(expected, true)) {
        dispatch(t);
      }
    }
  }

  // Removes a finished transaction from its queues and dispatches any
  // successor this completion makes free. Safe to call concurrently for
  // distinct transactions, and concurrently with submit().
  void complete(Transaction& t) {
    SlotSet touched;
    collect_slots(t, touched);
    for (const auto& [slot_id, record_index] : touched) {
      Slot& s = slots_[slot_id];
      probe(SchedulerProbe::Point::kSlotLock, t.seq(), slot_id);
      {
        SlotGuard g(s);
        if (s.head.txn != &t) {
          throw std::logic_error(
              "complete: transaction is not at the head of slot " +
              std::to_string(slot_id));
        }
        pop_locked(s);
        if (trace_) trace_->record(EventTrace::Kind::kRemove, t.seq(), slot_id);
      }
      probe(SchedulerProbe::Point::kSlotUnlocked, t.seq(), slot_id);

      probe(SchedulerProbe::Point::kHeadPeek, t.seq(), slot_id);
      Transaction* next = s.head_snapshot.load();
      if (next == nullptr) continue;
      if (next->run_.load()) continue;  // dispatch right owned elsewhere
      if (!is_free(*next)) continue;
      probe(SchedulerProbe::Point::kRunClaim, next->seq(), slot_id);
      bool expected = false;
      if (next->run_.compare_exchange_strong(expected, true)) {
        dispatch(*next);
      }
    }
  }

  // True iff t heads every queue it belongs to. Lock-free: reads the per-slot
  // head snapshots, so the answer can be momentarily stale; callers tolerate
  // that (a missed opportunity is retried by a later completion, a double
  // dispatch is prevented by the run flag).
  bool is_free(const Transaction& t) const {
    free_checks_.fetch_add(1, std::memory_order_relaxed);
    for (const RecordKey& r : t.records()) {
      const std::uint64_t slot_id = slot_of(r);
      probe(SchedulerProbe::Point::kHeadPeek, t.seq(), slot_id);
      if (slots_[slot_id].head_snapshot.load() != &t) {
        return false;
      }
    }
    return true;
  }

  std::uint64_t free_checks() const noexcept {
    return free_checks_.load(std::memory_order_relaxed);
  }
  std::uint64_t dispatches() const noexcept {
    return dispatches_.load(std::memory_order_relaxed);
  }

  // Test/debug helper: seqs queued in one slot, front to back.
  std::vector<std::uint64_t> queue_snapshot(std::uint64_t slot_id) {
    Slot& s = slots_[slot_id];
    SlotGuard g(s);
    std::vector<std::uint64_t> seqs;
    for (Transaction::QueueLink link = s.head; link.txn != nullptr;
         link = link.txn->links_[link.record_index]) {
      seqs.push_back(link.txn->seq());
    }
    return seqs;
  }

 private:
  // A slot is one hash bucket: guard, intrusive FIFO ends, and an atomic
  // snapshot of the queue head readable without the guard. Kept lean because
  // there are H of them (40 bytes each at the default H = 1,024,000).
  struct Slot {
    detail::SpinLock guard;
    Transaction::QueueLink head;
    Transaction::QueueLink tail;
    std::atomic<Transaction*> head_snapshot{nullptr};
  };

  // Holding two slot guards at once would reintroduce lock-order deadlocks;
  // the per-thread depth check makes the single-guard rule self-enforcing.
  class SlotGuard {
   public:
    explicit SlotGuard(Slot& s) : slot_(s) {
      if (detail::tls_slot_guards_held != 0) {
        throw std::logic_error("a thread may hold at most one slot guard");
      }
      slot_.guard.lock();
      ++detail::tls_slot_guards_held;
    }
    ~SlotGuard() {
      slot_.guard.unlock();
      --detail::tls_slot_guards_held;
    }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

   private:
    Slot& slot_;
  };

  // (slot, record index) pairs, first occurrence per slot. A transaction
  // whose records collide into one slot is queued there once; queuing it
  // twice would block the queue on itself.
  using SlotSet = std::vector<std::pair<std::uint64_t, std::uint32_t>>;

  void collect_slots(const Transaction& t, SlotSet& out) const {
    const auto& records = t.records();
    out.reserve(records.size());
    for (std::uint32_t j = 0; j < records.size(); ++j) {
      const std::uint64_t slot_id = slot_of(records[j]);
      bool seen = false;
      for (const auto& [prior, unused] : out) {
        if (prior == slot_id) {
          seen = true;
          break;
        }
      }
      if (!seen) out.emplace_back(slot_id, j);
    }
  }

  void push_locked(Slot& s, Transaction& t, std::uint32_t record_index) {
    if (s.tail.txn == nullptr) {
      s.head = Transaction::QueueLink{&t, record_index};
      s.tail = s.head;
      s.head_snapshot.store(&t);
      return;
    }
    if (s.tail.txn->seq() >= t.seq()) {
      throw std::logic_error("slot queue would violate seq order");
    }
    s.tail.txn->links_[s.tail.record_index] =
        Transaction::QueueLink{&t, record_index};
    s.tail = Transaction::QueueLink{&t, record_index};
  }

  void pop_locked(Slot& s) {
    Transaction::QueueLink next = s.head.txn->links_[s.head.record_index];
    s.head = next;
    if (next.txn == nullptr) {
      s.tail = Transaction::QueueLink{};
    }
    s.head_snapshot.store(next.txn);
  }

  void dispatch(Transaction& t) {
    dispatches_.fetch_add(1, std::memory_order_relaxed);
    if (trace_) trace_->record(EventTrace::Kind::kDispatch, t.seq(), 0);
    sink_(t);
  }

  void probe(SchedulerProbe::Point p, std::uint64_t seq,
             std::uint64_t slot) const {
    if (probe_) probe_->at(p, seq, slot);
  }

  RecordHasher hasher_;
  std::size_t slot_count_;
  std::unique_ptr<Slot[]> slots_;
  Sink sink_;
  EventTrace* trace_;
  SchedulerProbe* probe_;

  bool have_last_ = false;
  std::uint64_t last_seq_ = 0;

  mutable std::atomic<std::uint64_t> free_checks_{0};
  std::atomic<std::uint64_t> dispatches_{0};
};

}  // namespace psmr
