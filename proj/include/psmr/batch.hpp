// Batch-granularity baseline: consecutive transactions are packed m at a
// time, each batch carries a bitmap of its hashed record positions, and
// batches form the vertices of the dependency graph. Two batches conflict iff
// their bitmaps intersect (false positives possible, false negatives not, as
// long as both sides use the same bitmap size and hash seed). Members of a
// batch execute sequentially on the worker that acquired it.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "psmr/core.hpp"
#include "psmr/hash.hpp"

namespace psmr {

class Bitmap {
 public:
  explicit Bitmap(std::size_t bits)
      : bits_(bits), words_((bits + 63) / 64, 0) {
    if (bits == 0) throw std::invalid_argument("bitmap must have bits");
  }

  std::size_t bits() const noexcept { return bits_; }

  void set(std::size_t pos) { words_[pos >> 6] |= 1ULL << (pos & 63); }

  bool test(std::size_t pos) const {
    return (words_[pos >> 6] >> (pos & 63)) & 1;
  }

  bool intersects(const Bitmap& other) const {
    if (bits_ != other.bits_) {
      throw std::invalid_argument("bitmap size mismatch: " +
                                  std::to_string(bits_) + " vs " +
                                  std::to_string(other.bits_));
    }
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (words_[i] & other.words_[i]) return true;
    }
    return false;
  }

 private:
  std::size_t bits_;
  std::vector<std::uint64_t> words_;
};

struct Batch {
  std::uint32_t id = 0;
  std::vector<Transaction*> members;  // contiguous seq range, ascending
  Bitmap bitmap;

  explicit Batch(std::uint32_t batch_id, std::size_t bitmap_bits)
      : id(batch_id), bitmap(bitmap_bits) {}
};

inline bool batch_conflicts(const Batch& a, const Batch& b) {
  return a.bitmap.intersects(b.bitmap);
}

class BatchScheduler {
 public:
  static constexpr std::size_t kDefaultBitmapBits = 1'024'000;

  BatchScheduler(std::size_t batch_size, std::size_t bitmap_bits,
                 std::uint64_t hash_seed)
      : batch_size_(batch_size), bitmap_bits_(bitmap_bits), hasher_(hash_seed) {
    if (batch_size_ == 0) {
      throw std::invalid_argument("batch size must be positive");
    }
  }

  std::size_t batch_size() const noexcept { return batch_size_; }

  // Feeder side; strictly ascending seq. Seals a batch every batch_size
  // transactions.
  void add(Transaction& t) {
    std::lock_guard<std::mutex> lk(mu_);
    if (!open_) {
      open_.emplace(next_id_, bitmap_bits_);  // real id assigned at seal
    }
    open_->members.push_back(&t);
    for (const RecordKey& r : t.records()) {
      open_->bitmap.set(hasher_(r.bytes) % bitmap_bits_);
    }
    ++fed_txns_;
    if (open_->members.size() == batch_size_) {
      seal_locked();
    }
  }

  // Flushes a partial final batch and marks the stream complete.
  void finish_feeding() {
    std::lock_guard<std::mutex> lk(mu_);
    if (open_ && !open_->members.empty()) {
      seal_locked();
    }
    open_.reset();
    feeding_done_ = true;
    cv_.notify_all();
  }

  // Worker side. Blocks for a batch with no unexecuted predecessor batches;
  // lowest batch id first. nullptr once drained or aborted.
  const Batch* acquire() {
    std::unique_lock<std::mutex> lk(mu_);
    for (;;) {
      for (std::size_t j = first_live_; j < vertices_.size(); ++j) {
        Vertex& v = vertices_[j];
        if (v.state == Vertex::kPending && v.predecessors == 0) {
          v.state = Vertex::kExecuting;
          return &v.batch;
        }
      }
      if (aborted_ || (feeding_done_ && live_ == 0)) {
        return nullptr;
      }
      cv_.wait(lk);
    }
  }

  // Worker side, once every member of the batch has been applied.
  void remove(const Batch& b) {
    std::lock_guard<std::mutex> lk(mu_);
    if (b.id >= vertices_.size()) {
      throw std::logic_error("remove of unknown batch");
    }
    Vertex& v = vertices_[b.id];
    if (v.state != Vertex::kExecuting) {
      throw std::logic_error("remove of non-executing batch " +
                             std::to_string(b.id));
    }
    v.state = Vertex::kRemoved;
    --live_;
    executed_txns_ += v.batch.members.size();
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
  std::uint64_t bitmap_conflicts() const noexcept {
    return bitmap_conflicts_.load(std::memory_order_relaxed);
  }

  // Test hooks.
  std::size_t batch_count() const {
    std::lock_guard<std::mutex> lk(mu_);
    return vertices_.size();
  }
  std::vector<std::uint64_t> batch_seqs(std::uint32_t id) const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<std::uint64_t> out;
    for (const Transaction* t : vertices_.at(id).batch.members) {
      out.push_back(t->seq());
    }
    return out;
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (const Vertex& v : vertices_) {
      for (std::uint32_t succ : v.successors) {
        out.emplace_back(v.batch.id, succ);
      }
    }
    return out;
  }

 private:
  struct Vertex {
    Batch batch;
    std::uint32_t predecessors = 0;
    std::vector<std::uint32_t> successors;
    enum State : std::uint8_t { kPending, kExecuting, kRemoved };
    State state = kPending;

    explicit Vertex(Batch&& b) : batch(std::move(b)) {}
  };

  void seal_locked() {
    const std::uint32_t id = next_id_++;
    open_->id = id;
    Vertex v(std::move(*open_));
    open_.reset();
    for (std::size_t j = first_live_; j < vertices_.size(); ++j) {
      Vertex& other = vertices_[j];
      if (other.state == Vertex::kRemoved) continue;
      comparisons_.fetch_add(1, std::memory_order_relaxed);
      if (other.batch.bitmap.intersects(v.batch.bitmap)) {
        bitmap_conflicts_.fetch_add(1, std::memory_order_relaxed);
        other.successors.push_back(id);
        ++v.predecessors;
      }
    }
    const bool free_now = v.predecessors == 0;
    vertices_.push_back(std::move(v));
    ++live_;
    if (free_now) cv_.notify_one();
  }

  std::size_t batch_size_;
  std::size_t bitmap_bits_;
  RecordHasher hasher_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Vertex> vertices_;  // batch id order; deque keeps Batch* stable
  std::optional<Batch> open_;
  std::uint32_t next_id_ = 0;
  std::size_t first_live_ = 0;
  std::size_t live_ = 0;
  std::uint64_t fed_txns_ = 0;
  std::uint64_t executed_txns_ = 0;
  bool feeding_done_ = false;
  bool aborted_ = false;
  std::atomic<std::uint64_t> comparisons_{0};
  std::atomic<std::uint64_t> bitmap_conflicts_{0};
};

// The closed-form inter-batch conflict probability for batch size m over a
// universe of n records, evaluated term by term in log space so it stays
// finite for n up to 1e8 and m up to 1e3:
//
//   p(n, m) = sum_{i=1..m} C(n,i) * (i/n)^m * ((n-i)/n)^m
//
// Evaluated exactly as printed. Note that it does not reduce to the pairwise
// probability 1/n at m = 1 (it gives (n-1)/n), and for m >= 2 the sum can
// exceed 1; the Monte Carlo cross-check in the tests documents how far this
// expression sits from a simulated two-batch record overlap.
inline double log_analytic_batch_conflict_rate(std::uint64_t n,
                                               std::uint64_t m) {
  if (m < 1 || m > n) {
    throw std::invalid_argument("requires 1 <= m <= n");
  }
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  std::vector<double> log_terms;
  log_terms.reserve(m);
  for (std::uint64_t i = 1; i <= m; ++i) {
    if (i == n) break;  // ((n-i)/n)^m term is zero
    const double di = static_cast<double>(i);
    const double log_choose = std::lgamma(dn + 1.0) - std::lgamma(di + 1.0) -
                              std::lgamma(dn - di + 1.0);
    log_terms.push_back(log_choose + dm * std::log(di / dn) +
                        dm * std::log((dn - di) / dn));
  }
  // log-sum-exp with a max shift: no intermediate overflow even where the
  // expression itself is astronomically large.
  double peak = log_terms.front();
  for (double t : log_terms) peak = std::max(peak, t);
  double sum = 0.0;
  for (double t : log_terms) sum += std::exp(t - peak);
  return peak + std::log(sum);
}

inline double analytic_batch_conflict_rate(std::uint64_t n, std::uint64_t m) {
  // May legitimately exceed the double range for large m (the expression is
  // not a probability there); use the log variant to inspect such values.
  return std::exp(log_analytic_batch_conflict_rate(n, m));
}

// Monte Carlo: probability that two independent batches of m records drawn
// uniformly from [0, n) share at least one record.
inline double mc_batch_record_overlap(std::uint64_t n, std::uint64_t m,
                                      std::uint64_t trials,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::uint64_t hits = 0;
  std::vector<std::uint64_t> a(m), b(m);
  for (std::uint64_t t = 0; t < trials; ++t) {
    for (std::uint64_t j = 0; j < m; ++j) a[j] = rng.bounded(n);
    for (std::uint64_t j = 0; j < m; ++j) b[j] = rng.bounded(n);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    bool overlap = false;
    while (i < m && j < m) {
      if (a[i] == b[j]) {
        overlap = true;
        break;
      }
      (a[i] < b[j]) ? ++i : ++j;
    }
    if (overlap) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

}  // namespace psmr
