// Deterministic workload generation: conflict-free and
// conflict-rate-parameterized transaction streams.
//
// Conflicts are produced by a sliding-window reuse model: with probability
// `conflict_rate` a transaction reuses one record drawn uniformly from the
// records of the last `window` transactions; all other records are fresh,
// globally distinct keys. With rate 0 every record set is pairwise disjoint;
// with rate 1 and window 1 every transaction conflicts with its predecessor.

#pragma once

#include <cctype>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "psmr/core.hpp"
#include "psmr/hash.hpp"

namespace psmr {

struct WorkloadSpec {
  std::uint64_t txn_count = 0;
  std::uint64_t record_universe = 100'000'000;
  std::uint32_t commands_per_txn = 2;
  double conflict_rate = 0.0;
  std::uint32_t window = 1000;
  // PUT/GET/DELETE weights.
  std::uint32_t put_weight = 2;
  std::uint32_t get_weight = 1;
  std::uint32_t delete_weight = 1;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string key_bytes(std::uint64_t id) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[id & 0xf];
    id >>= 4;
  }
  return out;  // fixed width, so byte order equals numeric order
}

}  // namespace detail

inline TotalOrderLog generate_workload(const WorkloadSpec& spec) {
  if (spec.txn_count == 0) {
    throw std::invalid_argument("txn_count must be positive");
  }
  if (spec.commands_per_txn == 0) {
    throw std::invalid_argument("commands_per_txn must be positive");
  }
  if (spec.conflict_rate < 0.0 || spec.conflict_rate > 1.0) {
    throw std::invalid_argument("conflict_rate must be in [0,1]");
  }
  if (spec.window == 0) {
    throw std::invalid_argument("window must be positive");
  }
  const std::uint32_t weight_sum =
      spec.put_weight + spec.get_weight + spec.delete_weight;
  if (weight_sum == 0) {
    throw std::invalid_argument("op weights must not all be zero");
  }

  TotalOrderLog log;
  Rng rng(derive_seed(spec.seed, 0xf00d));
  std::unordered_set<std::uint64_t> used;
  used.reserve(spec.txn_count * spec.commands_per_txn);
  std::deque<const Transaction*> recent;

  auto fresh_key = [&]() -> std::string {
    if (used.size() >= spec.record_universe) {
      throw std::runtime_error(
          "record universe exhausted: cannot supply a fresh key");
    }
    for (;;) {
      const std::uint64_t id = rng.bounded(spec.record_universe);
      if (used.insert(id).second) {
        return detail::key_bytes(id);
      }
    }
  };

  auto pick_op = [&](std::uint64_t seq, std::uint32_t idx,
                     std::string key) -> Command {
    const std::uint64_t r = rng.bounded(weight_sum);
    if (r < spec.put_weight) {
      std::string value =
          detail::key_bytes(mix64(derive_seed(spec.seed, seq) + idx));
      return Command::put(std::move(key), std::move(value));
    }
    if (r < spec.put_weight + spec.get_weight) {
      return Command::get(std::move(key));
    }
    return Command::del(std::move(key));
  };

  for (std::uint64_t seq = 0; seq < spec.txn_count; ++seq) {
    std::vector<Command> commands;
    commands.reserve(spec.commands_per_txn);

    const bool reuse =
        !recent.empty() && rng.unit() < spec.conflict_rate;
    for (std::uint32_t j = 0; j < spec.commands_per_txn; ++j) {
      std::string key;
      if (reuse && j == 0) {
        const Transaction* victim = recent[rng.bounded(recent.size())];
        const auto& recs = victim->records();
        key = recs[rng.bounded(recs.size())].bytes;
      } else {
        key = fresh_key();
      }
      commands.push_back(pick_op(seq, j, std::move(key)));
    }

    const Transaction& t = log.append(std::move(commands));
    recent.push_back(&t);
    if (recent.size() > spec.window) {
      recent.pop_front();
    }
  }
  return log;
}

// Post-hoc oracle: fraction of transactions whose record set intersects at
// least one of the preceding `window` transactions.
inline double measured_window_conflict_fraction(const TotalOrderLog& log,
                                                std::uint32_t window) {
  if (log.size() < 2) return 0.0;
  std::uint64_t hits = 0;
  for (std::size_t i = 1; i < log.size(); ++i) {
    const std::size_t lo = i > window ? i - window : 0;
    for (std::size_t j = lo; j < i; ++j) {
      if (records_intersect(log[j], log[i])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(log.size() - 1);
}

// Flat key=value config: one pair per line, '#' starts a comment. Unknown
// keys are rejected so typos do not silently fall back to defaults.
inline WorkloadSpec parse_workload_config(std::istream& in,
                                          WorkloadSpec base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string trimmed;
    for (char c : line) {
      if (!isspace(static_cast<unsigned char>(c))) trimmed += c;
    }
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key=value");
    }
    const std::string key = trimmed.substr(0, eq);
    const std::string value = trimmed.substr(eq + 1);
    try {
      if (key == "txns") {
        base.txn_count = std::stoull(value);
      } else if (key == "record_universe") {
        base.record_universe = std::stoull(value);
      } else if (key == "commands_per_txn") {
        base.commands_per_txn = static_cast<std::uint32_t>(std::stoul(value));
      } else if (key == "conflict_rate") {
        base.conflict_rate = std::stod(value);
      } else if (key == "conflict_window") {
        base.window = static_cast<std::uint32_t>(std::stoul(value));
      } else if (key == "put_weight") {
        base.put_weight = static_cast<std::uint32_t>(std::stoul(value));
      } else if (key == "get_weight") {
        base.get_weight = static_cast<std::uint32_t>(std::stoul(value));
      } else if (key == "delete_weight") {
        base.delete_weight = static_cast<std::uint32_t>(std::stoul(value));
      } else if (key == "seed") {
        base.seed = std::stoull(value);
      } else {
        throw std::runtime_error("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": bad value for " + key);
    }
  }
  return base;
}

inline WorkloadSpec load_workload_config(const std::string& path,
                                         WorkloadSpec base = {}) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open workload config: " + path);
  }
  return parse_workload_config(in, base);
}

}  // namespace psmr
