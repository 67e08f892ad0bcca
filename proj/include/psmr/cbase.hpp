// Baseline scheduler: explicit dependency graph with pairwise conflict
// detection and one graph-wide lock.
//
// Every insert compares the new transaction against all live vertices, so
// insertion cost grows with the pending-set size; insert, acquire and remove
// all serialize on the single guard. This is the reference behaviour the
// index scheduler is measured against, and the graph doubles as the
// brute-force oracle in the correctness tests. No transitive reduction is
// performed: an edge is added for every conflicting live pair.
//
// Record keys are interned to dense ids held inline in the vertex, so the
// pairwise scan streams through contiguous memory instead of chasing
// per-transaction pointers. Interning is bijective: the conflict answer is
// exactly record-set intersection.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "psmr/core.hpp"

namespace psmr {

// Direct conflict test: record sets intersect.
inline bool conflicts(const Transaction& a, const Transaction& b) {
  return records_intersect(a, b);
}

class CbaseScheduler {
 public:
  CbaseScheduler() = default;

  // Feeder side; strictly ascending seq.
  void insert(Transaction& t) {
    std::lock_guard<std::mutex> lk(mu_);
    if (index_.count(t.seq())) {
      throw std::logic_error("duplicate insert: seq " +
                             std::to_string(t.seq()));
    }
    const std::uint32_t id = static_cast<std::uint32_t>(vertices_.size());
    Vertex v;
    v.txn = &t;
    intern_records(t, v);

    std::uint64_t scanned = 0;
    for (std::size_t j = first_live_; j < vertices_.size(); ++j) {
      Vertex& other = vertices_[j];
      if (other.state == Vertex::kRemoved) continue;
      ++scanned;
      if (vertices_conflict(other, v)) {
        other.successors.push_back(id);
        ++v.predecessors;
      }
    }
    comparisons_.fetch_add(scanned, std::memory_order_relaxed);

    const bool free_now = v.predecessors == 0;
    vertices_.push_back(std::move(v));
    index_.emplace(t.seq(), id);
    ++live_;
    if (free_now) {
      cv_.notify_one();
    }
  }

  void finish_feeding() {
    std::lock_guard<std::mutex> lk(mu_);
    feeding_done_ = true;
    cv_.notify_all();
  }

  // Worker side. Blocks until a transaction with no unexecuted predecessors
  // is available and marks it executing; lowest seq wins ties. Returns
  // nullptr once the graph is drained (or the scheduler was aborted).
  Transaction* acquire() {
    std::unique_lock<std::mutex> lk(mu_);
    for (;;) {
      for (std::size_t j = first_live_; j < vertices_.size(); ++j) {
        Vertex& v = vertices_[j];
        if (v.state == Vertex::kPending && v.predecessors == 0) {
          v.state = Vertex::kExecuting;
          return v.txn;
        }
      }
      if (aborted_ || (feeding_done_ && live_ == 0)) {
        return nullptr;
      }
      cv_.wait(lk);
    }
  }

  // Worker side, after execution. Deletes the vertex and its edges; newly
  // freed successors wake waiting workers.
  void remove(Transaction& t) {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = index_.find(t.seq());
    if (it == index_.end()) {
      throw std::logic_error("remove of unknown transaction: seq " +
                             std::to_string(t.seq()));
    }
    Vertex& v = vertices_[it->second];
    if (v.state != Vertex::kExecuting) {
      throw std::logic_error("remove of non-executing transaction: seq " +
                             std::to_string(t.seq()));
    }
    v.state = Vertex::kRemoved;
    --live_;
    bool freed_any = false;
    for (std::uint32_t succ : v.successors) {
      Vertex& s = vertices_[succ];
      if (--s.predecessors == 0 && s.state == Vertex::kPending) {
        freed_any = true;
      }
    }
    while (first_live_ < vertices_.size() &&
           vertices_[first_live_].state == Vertex::kRemoved) {
      ++first_live_;
    }
    if (freed_any || (feeding_done_ && live_ == 0)) {
      cv_.notify_all();
    }
  }

  void abort() {
    std::lock_guard<std::mutex> lk(mu_);
    aborted_ = true;
    cv_.notify_all();
  }

  bool wait_drained(std::chrono::steady_clock::time_point deadline) {
    std::unique_lock<std::mutex> lk(mu_);
    return cv_.wait_until(lk, deadline, [this] {
      return aborted_ || (feeding_done_ && live_ == 0);
    });
  }

  std::uint64_t comparisons() const noexcept {
    return comparisons_.load(std::memory_order_relaxed);
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lk(mu_);
    return live_;
  }

  // Test hooks: live edges as (earlier seq, later seq), and the seqs that
  // could be acquired right now.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> edges() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    for (const Vertex& v : vertices_) {
      if (v.state == Vertex::kRemoved) continue;
      for (std::uint32_t succ : v.successors) {
        if (vertices_[succ].state != Vertex::kRemoved) {
          out.emplace_back(v.txn->seq(), vertices_[succ].txn->seq());
        }
      }
    }
    return out;
  }

  std::vector<std::uint64_t> free_now() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<std::uint64_t> out;
    for (const Vertex& v : vertices_) {
      if (v.state == Vertex::kPending && v.predecessors == 0) {
        out.push_back(v.txn->seq());
      }
    }
    return out;
  }

 private:
  static constexpr std::size_t kInlineRecords = 6;

  struct Vertex {
    Transaction* txn = nullptr;
    std::uint32_t predecessors = 0;
    std::uint32_t record_count = 0;
    std::uint32_t record_ids[kInlineRecords] = {};  // sorted; inline fast path
    std::vector<std::uint32_t> spill;               // sorted; rare large sets
    std::vector<std::uint32_t> successors;
    enum State : std::uint8_t { kPending, kExecuting, kRemoved };
    State state = kPending;
  };

  void intern_records(const Transaction& t, Vertex& v) {
    // records() is sorted by key bytes; interned ids are assigned in first-
    // seen order, so per-vertex id lists need their own sort.
    std::vector<std::uint32_t> ids;
    ids.reserve(t.records().size());
    for (const RecordKey& r : t.records()) {
      auto [it, inserted] =
          intern_.try_emplace(r.bytes, static_cast<std::uint32_t>(intern_.size()));
      (void)inserted;
      ids.push_back(it->second);
    }
    std::sort(ids.begin(), ids.end());
    v.record_count = static_cast<std::uint32_t>(ids.size());
    if (ids.size() <= kInlineRecords) {
      for (std::size_t i = 0; i < ids.size(); ++i) v.record_ids[i] = ids[i];
    } else {
      v.spill = std::move(ids);
    }
  }

  static bool vertices_conflict(const Vertex& a, const Vertex& b) {
    const std::uint32_t* pa =
        a.spill.empty() ? a.record_ids : a.spill.data();
    const std::uint32_t* pb =
        b.spill.empty() ? b.record_ids : b.spill.data();
    std::uint32_t i = 0, j = 0;
    while (i < a.record_count && j < b.record_count) {
      if (pa[i] == pb[j]) return true;
      (pa[i] < pb[j]) ? ++i : ++j;
    }
    return false;
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Vertex> vertices_;  // insertion (= seq) order
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
  std::unordered_map<std::string, std::uint32_t> intern_;
  std::size_t first_live_ = 0;
  std::size_t live_ = 0;
  bool feeding_done_ = false;
  bool aborted_ = false;
  std::atomic<std::uint64_t> comparisons_{0};
};

}  // namespace psmr
