// In-memory key-value state machine plus the applied-transaction ledger used
// for cross-replica consistency checks.
//
// apply() assumes the scheduler has already serialized conflicting
// transactions; it does not re-serialize per key. It does, however, carry a
// per-record occupancy marker so that a scheduler bug that lets two
// conflicting transactions run concurrently is detected and counted instead
// of silently corrupting state.

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "psmr/core.hpp"
#include "psmr/hash.hpp"

namespace psmr {

class ReplicaState {
 public:
  // `expected_txns` sizes the exactly-once ledger (log seqs are dense from 0).
  explicit ReplicaState(std::size_t expected_txns,
                        std::size_t shard_count = 64)
      : shards_(shard_count),
        applied_(std::make_unique<std::atomic<std::uint32_t>[]>(expected_txns)),
        ledger_(expected_txns, 0),
        expected_(expected_txns) {
    for (std::size_t i = 0; i < expected_txns; ++i) {
      applied_[i].store(0, std::memory_order_relaxed);
    }
  }

  // Executes the commands in listed order. Returns the per-command results
  // (the read value for GET, nullopt otherwise). Applying the same seq twice
  // is a hard failure: it means a scheduler dispatched it twice.
  std::vector<std::optional<std::string>> apply(const Transaction& txn) {
    const std::uint64_t seq = txn.seq();
    if (seq >= expected_) {
      throw std::out_of_range("seq beyond the ledger");
    }
    if (applied_[seq].fetch_add(1, std::memory_order_acq_rel) != 0) {
      throw std::logic_error("transaction applied more than once: seq " +
                             std::to_string(seq));
    }

    // Mark every record of the transaction as occupied. Finding one already
    // occupied means a conflicting transaction is running concurrently.
    for (const RecordKey& r : txn.records()) {
      Shard& sh = shard_of(r.bytes);
      std::lock_guard<std::mutex> lk(sh.mu);
      Entry& e = sh.map[r.bytes];
      if (e.occupant != 0) {
        order_violations_.fetch_add(1, std::memory_order_relaxed);
      }
      e.occupant = seq + 1;
      if (!e.applied_seqs.empty() && e.applied_seqs.back() >= seq) {
        order_violations_.fetch_add(1, std::memory_order_relaxed);
      }
      e.applied_seqs.push_back(seq);
    }

    std::vector<std::optional<std::string>> results;
    results.reserve(txn.commands().size());
    std::uint64_t result_digest = mix64(seq + 0x9e3779b97f4a7c15ULL);
    for (const Command& c : txn.commands()) {
      Shard& sh = shard_of(c.record.bytes);
      std::lock_guard<std::mutex> lk(sh.mu);
      Entry& e = sh.map[c.record.bytes];
      switch (c.op) {
        case Op::kPut:
          e.value = *c.value;
          results.emplace_back(std::nullopt);
          break;
        case Op::kGet:
          results.emplace_back(e.value);
          break;
        case Op::kDelete:
          e.value.reset();
          results.emplace_back(std::nullopt);
          break;
      }
      // GET results feed the ledger digest so that a wrongly reordered read
      // shows up as a digest mismatch across replicas.
      const std::optional<std::string>& res = results.back();
      result_digest = mix64(result_digest ^ digest_hasher_(c.record.bytes));
      result_digest =
          mix64(result_digest ^ (res ? digest_hasher_(*res) + 1 : 0));
    }
    ledger_[seq] = result_digest;

    for (const RecordKey& r : txn.records()) {
      Shard& sh = shard_of(r.bytes);
      std::lock_guard<std::mutex> lk(sh.mu);
      Entry& e = sh.map[r.bytes];
      if (e.occupant != seq + 1) {
        order_violations_.fetch_add(1, std::memory_order_relaxed);
      }
      e.occupant = 0;
    }
    return results;
  }

  std::optional<std::string> lookup(const std::string& key) const {
    const Shard& sh = shard_of(key);
    std::lock_guard<std::mutex> lk(sh.mu);
    auto it = sh.map.find(key);
    if (it == sh.map.end()) return std::nullopt;
    return it->second.value;
  }

  std::size_t live_keys() const {
    std::size_t n = 0;
    for (const Shard& sh : shards_) {
      std::lock_guard<std::mutex> lk(sh.mu);
      for (const auto& [k, e] : sh.map) {
        if (e.value) ++n;
      }
    }
    return n;
  }

  std::uint32_t applied_count(std::uint64_t seq) const {
    return applied_[seq].load(std::memory_order_acquire);
  }

  // seqs with applied_count != 1, capped for error reports.
  std::vector<std::uint64_t> exactly_once_failures(std::size_t cap = 16) const {
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = 0; s < expected_ && out.size() < cap; ++s) {
      if (applied_count(s) != 1) out.push_back(s);
    }
    return out;
  }

  std::uint64_t unapplied() const {
    std::uint64_t n = 0;
    for (std::uint64_t s = 0; s < expected_; ++s) {
      if (applied_count(s) == 0) ++n;
    }
    return n;
  }

  std::uint64_t over_applied() const {
    std::uint64_t n = 0;
    for (std::uint64_t s = 0; s < expected_; ++s) {
      if (applied_count(s) > 1) ++n;
    }
    return n;
  }

  std::vector<std::uint64_t> unapplied_seqs(std::size_t cap = 16) const {
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = 0; s < expected_ && out.size() < cap; ++s) {
      if (applied_count(s) == 0) out.push_back(s);
    }
    return out;
  }

  std::uint64_t order_violations() const {
    return order_violations_.load(std::memory_order_acquire);
  }

  const std::vector<std::uint64_t>& applied_order(const std::string& key) const {
    static const std::vector<std::uint64_t> kEmpty;
    const Shard& sh = shard_of(key);
    std::lock_guard<std::mutex> lk(sh.mu);
    auto it = sh.map.find(key);
    return it == sh.map.end() ? kEmpty : it->second.applied_seqs;
  }

  // Digest over the live store contents, the per-seq command-result ledger
  // and the per-record execution orders. Replicas of one run must agree on
  // all three. Call after workers have been joined.
  std::uint64_t digest() const {
    std::vector<std::pair<std::string_view, const Entry*>> all;
    for (const Shard& sh : shards_) {
      for (const auto& [k, e] : sh.map) {
        all.emplace_back(k, &e);
      }
    }
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (const auto& [key, entry] : all) {
      h = mix64(h ^ digest_hasher_(key));
      if (entry->value) {
        h = mix64(h ^ (digest_hasher_(*entry->value) | 1));
      } else {
        h = mix64(h ^ 2);
      }
      for (std::uint64_t s : entry->applied_seqs) {
        h = mix64(h ^ (s + 3));
      }
    }
    for (std::uint64_t d : ledger_) {
      h = mix64(h ^ d);
    }
    return h;
  }

 private:
  struct Entry {
    std::optional<std::string> value;
    std::vector<std::uint64_t> applied_seqs;
    std::uint64_t occupant = 0;  // seq+1 of the transaction using this record
  };
  struct Shard {
    mutable std::mutex mu;
    std::unordered_map<std::string, Entry> map;
  };

  Shard& shard_of(const std::string& key) {
    return shards_[digest_hasher_(key) % shards_.size()];
  }
  const Shard& shard_of(const std::string& key) const {
    return shards_[digest_hasher_(key) % shards_.size()];
  }

  std::vector<Shard> shards_;
  std::unique_ptr<std::atomic<std::uint32_t>[]> applied_;
  std::vector<std::uint64_t> ledger_;  // per-seq result digest
  std::size_t expected_;
  std::atomic<std::uint64_t> order_violations_{0};
  RecordHasher digest_hasher_{0};  // fixed seed: digests comparable across runs
};

}  // namespace psmr
