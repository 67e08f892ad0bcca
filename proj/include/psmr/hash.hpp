// Seedable hashing and deterministic random number generation.
//
// Everything here must produce identical results on every replica of a run
// (and on every platform), so no std::hash / std::uniform_int_distribution:
// both are implementation-defined.

#pragma once

#include <cstdint>
#include <string_view>

namespace psmr {

// splitmix64 finalizer; full avalanche on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Seeded FNV-1a with a mixing finalizer. Used for record -> slot mapping,
// bitmap positions and state digests.
class RecordHasher {
 public:
  constexpr explicit RecordHasher(std::uint64_t seed = 0) noexcept
      : seed_(seed) {}

  constexpr std::uint64_t operator()(std::string_view bytes) const noexcept {
    std::uint64_t h = kOffset ^ mix64(seed_ + 0x6a09e667f3bcc909ULL);
    for (unsigned char c : bytes) {
      h ^= c;
      h *= kPrime;
    }
    return mix64(h);
  }

  constexpr std::uint64_t seed() const noexcept { return seed_; }

 private:
  static constexpr std::uint64_t kOffset = 14695981039346656037ULL;
  static constexpr std::uint64_t kPrime = 1099511628211ULL;
  std::uint64_t seed_;
};

// splitmix64 stream. Statistically fine for workload generation and the
// conflict simulations; cross-platform deterministic.
class Rng {
 public:
  constexpr explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform in [0, n) via Lemire's multiply-shift. n must be > 0.
  constexpr std::uint64_t bounded(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Uniform in [0, 1).
  constexpr double unit() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// Derives independent sub-seeds (per replica, per worker, per shard).
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::uint64_t salt) noexcept {
  return mix64(base ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
}

}  // namespace psmr
