// Structural false-positive simulations: how often does the single-hash
// record index (resp. the per-batch bitmap) report a conflict between a
// fresh transaction (resp. batch) and the pending window, when the true
// record-collision probability is negligible?
//
// Transactions carry a single record drawn from a large universe, so any
// measured conflict is essentially a hash false positive. The index model
// keeps a per-slot occupancy count over a sliding window of q transactions;
// the batch model keeps, per bitmap position, the set of window batches
// covering it, so a trial costs O(m) instead of scanning q pending entries.

#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "psmr/hash.hpp"

namespace psmr {

inline double analytic_pairwise_rate(std::uint64_t slot_count) {
  if (slot_count == 0) throw std::invalid_argument("slot count required");
  return 1.0 / static_cast<double>(slot_count);
}

namespace detail {

inline std::uint64_t sim_key_hash(const RecordHasher& hasher,
                                  std::uint64_t key_id) {
  char bytes[8];
  for (int i = 7; i >= 0; --i) {
    bytes[i] = static_cast<char>(key_id & 0xff);
    key_id >>= 8;
  }
  return hasher(std::string_view(bytes, 8));
}

// Mean fraction of the q pending single-record transactions whose record
// shares the fresh transaction's slot. One shard of the sampling.
inline std::uint64_t index_rate_shard(std::uint64_t slot_count,
                                      std::uint64_t queue_len,
                                      std::uint64_t trials,
                                      std::uint64_t universe,
                                      std::uint64_t seed,
                                      std::uint64_t* denominator) {
  const RecordHasher hasher(seed);
  Rng rng(derive_seed(seed, 0x51));

  // Flat per-slot counters when the table fits; hashed counters otherwise
  // (lets tests use astronomically large slot counts).
  const bool flat = slot_count <= (1ULL << 26);
  std::vector<std::uint32_t> counts;
  std::unordered_map<std::uint64_t, std::uint32_t> sparse;
  if (flat) {
    counts.assign(slot_count, 0);
  } else {
    sparse.reserve(queue_len * 2);
  }
  auto bump = [&](std::uint64_t slot, std::int32_t d) {
    if (flat) {
      counts[slot] += static_cast<std::uint32_t>(d);
    } else {
      sparse[slot] += static_cast<std::uint32_t>(d);
    }
  };
  auto peek = [&](std::uint64_t slot) -> std::uint32_t {
    if (flat) return counts[slot];
    auto it = sparse.find(slot);
    return it == sparse.end() ? 0 : it->second;
  };

  std::vector<std::uint64_t> window(queue_len);
  for (std::uint64_t i = 0; i < queue_len; ++i) {
    const std::uint64_t slot =
        sim_key_hash(hasher, rng.bounded(universe)) % slot_count;
    window[i] = slot;
    bump(slot, 1);
  }

  std::uint64_t shared_total = 0;
  std::uint64_t cursor = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const std::uint64_t slot =
        sim_key_hash(hasher, rng.bounded(universe)) % slot_count;
    shared_total += peek(slot);
    bump(window[cursor], -1);
    window[cursor] = slot;
    bump(slot, 1);
    cursor = (cursor + 1) % queue_len;
  }
  *denominator = trials * queue_len;
  return shared_total;
}

// Mean fraction of the q/m pending batches whose bitmap intersects the fresh
// batch's bitmap. Per bitmap position we keep a mask of which window batches
// cover it; the union over the fresh batch's m positions gives the
// intersecting set in O(m) words.
inline std::uint64_t batch_rate_shard(std::uint64_t bitmap_bits,
                                      std::uint64_t batch_size,
                                      std::uint64_t queue_len,
                                      std::uint64_t trials,
                                      std::uint64_t universe,
                                      std::uint64_t seed,
                                      std::uint64_t* denominator) {
  const std::uint64_t window_batches = queue_len / batch_size;
  if (window_batches == 0) {
    throw std::invalid_argument("queue shorter than one batch");
  }
  const std::uint64_t words = (window_batches + 63) / 64;
  if (bitmap_bits * words > (1ULL << 28)) {
    throw std::invalid_argument("bitmap window table too large");
  }

  const RecordHasher hasher(seed);
  Rng rng(derive_seed(seed, 0xb7));
  std::vector<std::uint64_t> covers(bitmap_bits * words, 0);
  std::vector<std::vector<std::uint64_t>> batch_slots(
      window_batches, std::vector<std::uint64_t>(batch_size));
  std::vector<std::uint64_t> acc(words);

  auto fill_batch = [&](std::vector<std::uint64_t>& slots) {
    for (std::uint64_t j = 0; j < batch_size; ++j) {
      slots[j] = sim_key_hash(hasher, rng.bounded(universe)) % bitmap_bits;
    }
  };
  auto mark = [&](const std::vector<std::uint64_t>& slots,
                  std::uint64_t ring_pos, bool on) {
    const std::uint64_t word = ring_pos >> 6;
    const std::uint64_t bit = 1ULL << (ring_pos & 63);
    for (std::uint64_t s : slots) {
      if (on) {
        covers[s * words + word] |= bit;
      } else {
        covers[s * words + word] &= ~bit;
      }
    }
  };

  for (std::uint64_t b = 0; b < window_batches; ++b) {
    fill_batch(batch_slots[b]);
    mark(batch_slots[b], b, true);
  }

  std::uint64_t intersecting_total = 0;
  std::uint64_t cursor = 0;
  std::vector<std::uint64_t> fresh(batch_size);
  for (std::uint64_t t = 0; t < trials; ++t) {
    fill_batch(fresh);
    for (std::uint64_t w = 0; w < words; ++w) acc[w] = 0;
    for (std::uint64_t s : fresh) {
      for (std::uint64_t w = 0; w < words; ++w) {
        acc[w] |= covers[s * words + w];
      }
    }
    std::uint64_t hits = 0;
    for (std::uint64_t w = 0; w < words; ++w) {
      hits += static_cast<std::uint64_t>(__builtin_popcountll(acc[w]));
    }
    intersecting_total += hits;

    mark(batch_slots[cursor], cursor, false);
    batch_slots[cursor].swap(fresh);
    mark(batch_slots[cursor], cursor, true);
    cursor = (cursor + 1) % window_batches;
  }
  *denominator = trials * window_batches;
  return intersecting_total;
}

}  // namespace detail

struct SimParams {
  std::uint64_t queue_len = 10'000;
  std::uint64_t trials = 1'000'000;
  std::uint64_t universe = 100'000'000;
  std::uint64_t seed = 0;
  unsigned shards = 1;  // fixed shard count keeps results seed-deterministic
};

inline double simulate_index_rate(std::uint64_t slot_count,
                                  const SimParams& p) {
  if (slot_count == 0 || p.queue_len == 0 || p.trials == 0) {
    throw std::invalid_argument("slot count, queue length and trials required");
  }
  const unsigned shards = p.shards == 0 ? 1 : p.shards;
  std::vector<std::uint64_t> sums(shards, 0), denoms(shards, 0);
  std::vector<std::thread> pool;
  for (unsigned s = 0; s < shards; ++s) {
    pool.emplace_back([&, s] {
      sums[s] = detail::index_rate_shard(
          slot_count, p.queue_len, p.trials / shards + (s == 0 ? p.trials % shards : 0),
          p.universe, derive_seed(p.seed, 0xaa00 + s), &denoms[s]);
    });
  }
  for (auto& th : pool) th.join();
  std::uint64_t sum = 0, denom = 0;
  for (unsigned s = 0; s < shards; ++s) {
    sum += sums[s];
    denom += denoms[s];
  }
  return static_cast<double>(sum) / static_cast<double>(denom);
}

inline double simulate_batch_rate(std::uint64_t bitmap_bits,
                                  std::uint64_t batch_size,
                                  const SimParams& p) {
  if (bitmap_bits == 0 || batch_size == 0 || p.trials == 0) {
    throw std::invalid_argument("bitmap bits, batch size and trials required");
  }
  const unsigned shards = p.shards == 0 ? 1 : p.shards;
  std::vector<std::uint64_t> sums(shards, 0), denoms(shards, 0);
  std::vector<std::thread> pool;
  for (unsigned s = 0; s < shards; ++s) {
    pool.emplace_back([&, s] {
      sums[s] = detail::batch_rate_shard(
          bitmap_bits, batch_size, p.queue_len,
          p.trials / shards + (s == 0 ? p.trials % shards : 0), p.universe,
          derive_seed(p.seed, 0xbb00 + s), &denoms[s]);
    });
  }
  for (auto& th : pool) th.join();
  std::uint64_t sum = 0, denom = 0;
  for (unsigned s = 0; s < shards; ++s) {
    sum += sums[s];
    denom += denoms[s];
  }
  return static_cast<double>(sum) / static_cast<double>(denom);
}

}  // namespace psmr
