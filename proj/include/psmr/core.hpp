// Core domain model: records, commands, transactions and the total-order log
// that every scheduler consumes.

#pragma once

#include <algorithm>
#include <atomic>
#include <compare>
#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace psmr {

// Identity of one database record. Equality and ordering are byte-exact.
struct RecordKey {
  std::string bytes;

  auto operator<=>(const RecordKey&) const = default;
};

enum class Op : std::uint8_t { kPut, kGet, kDelete };

inline const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::kPut:
      return "PUT";
    case Op::kGet:
      return "GET";
    case Op::kDelete:
      return "DELETE";
  }
  return "?";
}

// One command of a transaction. A value is carried iff the op is a PUT.
struct Command {
  Op op;
  RecordKey record;
  std::optional<std::string> value;

  static Command put(std::string key, std::string val) {
    return Command{Op::kPut, RecordKey{std::move(key)}, std::move(val)};
  }
  static Command get(std::string key) {
    return Command{Op::kGet, RecordKey{std::move(key)}, std::nullopt};
  }
  static Command del(std::string key) {
    return Command{Op::kDelete, RecordKey{std::move(key)}, std::nullopt};
  }

  Command(Op o, RecordKey r, std::optional<std::string> v)
      : op(o), record(std::move(r)), value(std::move(v)) {
    if ((op == Op::kPut) != value.has_value()) {
      throw std::invalid_argument("PUT carries a value; GET/DELETE do not");
    }
  }
};

// Sorted, duplicate-free set of every record the commands touch. Sorting is
// raw byte order, which makes "the last record" of a transaction a stable,
// replica-independent notion.
inline std::vector<RecordKey> canonical_records(
    std::span<const Command> commands) {
  if (commands.empty()) {
    throw std::invalid_argument("transaction needs at least one command");
  }
  std::vector<RecordKey> records;
  records.reserve(commands.size());
  for (const Command& c : commands) {
    records.push_back(c.record);
  }
  std::sort(records.begin(), records.end());
  records.erase(std::unique(records.begin(), records.end()), records.end());
  return records;
}

class IndexScheduler;

// A totally ordered unit of work. The payload (seq, commands, records) is
// immutable after construction; `run_` and `links_` are scratch state owned
// by whichever scheduler the transaction is currently submitted to.
class Transaction {
 public:
  Transaction(std::uint64_t seq, std::vector<Command> commands)
      : seq_(seq),
        commands_(std::move(commands)),
        records_(canonical_records(commands_)),
        links_(records_.size()) {}

  Transaction(const Transaction&) = delete;
  Transaction& operator=(const Transaction&) = delete;

  std::uint64_t seq() const noexcept { return seq_; }
  const std::vector<Command>& commands() const noexcept { return commands_; }
  const std::vector<RecordKey>& records() const noexcept { return records_; }
  const RecordKey& last_record() const noexcept { return records_.back(); }

 private:
  friend class IndexScheduler;

  // Link in one per-record FIFO queue: successor transaction plus the index
  // of the record through which the successor is queued there.
  struct QueueLink {
    Transaction* txn = nullptr;
    std::uint32_t record_index = 0;
  };

  std::uint64_t seq_;
  std::vector<Command> commands_;
  std::vector<RecordKey> records_;

  // Dispatch-once flag: true while the dispatch right is owned (initially by
  // the inserting thread, later by whoever wins the false->true transition).
  std::atomic<bool> run_{true};
  // links_[j] chains this transaction to its successor in the queue it
  // occupies through records()[j]. Guarded by that queue's slot lock.
  std::vector<QueueLink> links_;
};

// True iff the two record sets intersect (both are sorted and unique).
inline bool records_intersect(const Transaction& a, const Transaction& b) {
  auto i = a.records().begin();
  auto j = b.records().begin();
  while (i != a.records().end() && j != b.records().end()) {
    if (*i == *j) return true;
    if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

// Append-only sequence of transactions; entry k has seq k. Stands in for the
// consensus output: every replica of a run walks the same log.
class TotalOrderLog {
 public:
  TotalOrderLog() = default;
  TotalOrderLog(TotalOrderLog&&) = default;
  TotalOrderLog& operator=(TotalOrderLog&&) = default;
  TotalOrderLog(const TotalOrderLog&) = delete;
  TotalOrderLog& operator=(const TotalOrderLog&) = delete;

  Transaction& append(std::vector<Command> commands) {
    entries_.emplace_back(entries_.size(), std::move(commands));
    return entries_.back();
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const Transaction& operator[](std::size_t i) const { return entries_[i]; }
  Transaction& at(std::size_t i) { return entries_[i]; }

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

 private:
  std::deque<Transaction> entries_;  // deque: appends never move entries
};

inline void append_hex(std::string& out, std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  for (unsigned char c : bytes) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xf]);
  }
}

// One line per transaction: seq<TAB>op:key[:valuehex](,op:key[:valuehex])*
// UTF-8, LF line endings. Used to compare logs byte-for-byte across
// independently seeded sequencers.
inline std::string log_to_string(const TotalOrderLog& log) {
  std::string buf;
  for (const Transaction& t : log) {
    buf += std::to_string(t.seq());
    buf += '\t';
    bool first = true;
    for (const Command& c : t.commands()) {
      if (!first) buf += ',';
      first = false;
      buf += op_name(c.op);
      buf += ':';
      buf += c.record.bytes;
      if (c.value) {
        buf += ':';
        append_hex(buf, *c.value);
      }
    }
    buf += '\n';
  }
  return buf;
}

inline void write_log(const TotalOrderLog& log, std::ostream& out) {
  const std::string buf = log_to_string(log);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace psmr
