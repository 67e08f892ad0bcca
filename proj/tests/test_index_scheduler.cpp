#include <catch2/catch.hpp>

#include <deque>
#include <sstream>
#include <string>
#include <vector>

#include "psmr/core.hpp"
#include "psmr/index_scheduler.hpp"

using namespace psmr;

namespace {

// Scheduler plus a sink that tallies dispatches per seq.
struct Rig {
  std::vector<std::uint64_t> dispatched;
  std::deque<Transaction> txns;
  IndexScheduler sched;

  explicit Rig(std::size_t slots, std::uint64_t seed = 1,
               EventTrace* trace = nullptr)
      : sched(slots, seed,
              [this](Transaction& t) { dispatched.push_back(t.seq()); },
              trace) {}

  Transaction& txn(std::uint64_t seq, std::vector<std::string> keys) {
    std::vector<Command> cmds;
    for (auto& k : keys) cmds.push_back(Command::put(std::move(k), "v"));
    txns.emplace_back(seq, std::move(cmds));
    return txns.back();
  }

  std::size_t count(std::uint64_t seq) const {
    std::size_t n = 0;
    for (std::uint64_t s : dispatched) {
      if (s == seq) ++n;
    }
    return n;
  }
};

}  // namespace

TEST_CASE("record hashing is stable per index") {
  Rig rig(64);
  RecordKey k{"some-key"};
  REQUIRE(rig.sched.slot_of(k) == rig.sched.slot_of(k));
  REQUIRE(rig.sched.slot_of(k) < 64);

  Rig tiny(1);
  REQUIRE(tiny.sched.slot_of(RecordKey{"a"}) == 0);
  REQUIRE(tiny.sched.slot_of(RecordKey{"zzz"}) == 0);
}

TEST_CASE("constructor validation") {
  REQUIRE_THROWS_AS(IndexScheduler(0, 1, [](Transaction&) {}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(IndexScheduler(8, 1, IndexScheduler::Sink{}),
                    std::invalid_argument);
}

TEST_CASE("free transactions head every queue they belong to") {
  SECTION("sole transaction is free") {
    Rig rig(256);
    Transaction& t = rig.txn(0, {"x"});
    rig.sched.submit(t);
    REQUIRE(rig.sched.is_free(t));
  }
  SECTION("queued-behind transaction is not free") {
    Rig rig(256);
    Transaction& t1 = rig.txn(0, {"x"});
    Transaction& t2 = rig.txn(1, {"x"});
    rig.sched.submit(t1);
    rig.sched.submit(t2);
    REQUIRE(rig.sched.is_free(t1));
    REQUIRE_FALSE(rig.sched.is_free(t2));
  }
  SECTION("freedom is recovered when the blocker is completed") {
    Rig rig(256);
    Transaction& t1 = rig.txn(0, {"x", "y"});
    Transaction& t2 = rig.txn(1, {"y", "z"});
    rig.sched.submit(t1);
    rig.sched.submit(t2);
    REQUIRE(rig.sched.is_free(t1));
    REQUIRE_FALSE(rig.sched.is_free(t2));
    rig.sched.complete(t1);
    REQUIRE(rig.sched.is_free(t2));
  }
}

TEST_CASE("submit dispatches only dependency-free transactions") {
  SECTION("first transaction dispatches immediately") {
    Rig rig(256);
    Transaction& t1 = rig.txn(0, {"x"});
    rig.sched.submit(t1);
    REQUIRE(rig.dispatched == std::vector<std::uint64_t>{0});
  }
  SECTION("conflicting transaction is queued, not dispatched") {
    Rig rig(256);
    Transaction& t1 = rig.txn(0, {"x"});
    Transaction& t2 = rig.txn(1, {"x"});
    rig.sched.submit(t1);
    rig.sched.submit(t2);
    REQUIRE(rig.dispatched == std::vector<std::uint64_t>{0});
    const auto slot = rig.sched.slot_of(RecordKey{"x"});
    REQUIRE(rig.sched.queue_snapshot(slot) ==
            std::vector<std::uint64_t>{0, 1});
  }
  SECTION("four transactions on one record: FIFO queue, one dispatch") {
    Rig rig(256);
    for (std::uint64_t seq : {2ULL, 4ULL, 7ULL, 8ULL}) {
      rig.sched.submit(rig.txn(seq, {"x"}));
    }
    REQUIRE(rig.dispatched == std::vector<std::uint64_t>{2});
    const auto slot = rig.sched.slot_of(RecordKey{"x"});
    REQUIRE(rig.sched.queue_snapshot(slot) ==
            std::vector<std::uint64_t>{2, 4, 7, 8});
  }
}

TEST_CASE("complete removes heads and dispatches freed successors") {
  SECTION("sole transaction leaves an empty slot and no new dispatch") {
    Rig rig(256);
    Transaction& t1 = rig.txn(0, {"x"});
    rig.sched.submit(t1);
    rig.sched.complete(t1);
    REQUIRE(rig.dispatched == std::vector<std::uint64_t>{0});
    REQUIRE(rig.sched.queue_snapshot(rig.sched.slot_of(RecordKey{"x"})).empty());
  }
  SECTION("successor becomes free and is dispatched once") {
    Rig rig(256);
    Transaction& t1 = rig.txn(0, {"x", "y"});
    Transaction& t2 = rig.txn(1, {"y"});
    rig.sched.submit(t1);
    rig.sched.submit(t2);
    REQUIRE(rig.dispatched == std::vector<std::uint64_t>{0});
    rig.sched.complete(t1);
    REQUIRE(rig.dispatched == std::vector<std::uint64_t>{0, 1});
  }
  SECTION("successor heading two queues is dispatched exactly once") {
    Rig rig(256);
    Transaction& t1 = rig.txn(0, {"x"});
    Transaction& t2 = rig.txn(1, {"x", "y"});
    Transaction& t3 = rig.txn(2, {"y"});
    rig.sched.submit(t1);
    rig.sched.submit(t2);
    rig.sched.submit(t3);
    // Only t1 is free: t2 waits behind t1 on "x" while already heading "y",
    // and t3 waits behind t2 on "y".
    REQUIRE(rig.count(0) == 1);
    REQUIRE(rig.count(1) == 0);
    REQUIRE(rig.count(2) == 0);
    rig.sched.complete(t1);  // t2 now heads both of its queues
    REQUIRE(rig.count(1) == 1);
    REQUIRE(rig.count(2) == 0);  // dispatched once, not once per queue
    rig.sched.complete(t2);
    REQUIRE(rig.count(2) == 1);
    rig.sched.complete(t3);
    REQUIRE(rig.dispatched.size() == 3);
  }
  SECTION("chained completions walk the whole queue") {
    Rig rig(256);
    std::vector<std::uint64_t> seqs{2, 4, 7, 8};
    for (std::uint64_t s : seqs) rig.sched.submit(rig.txn(s, {"x"}));
    for (std::uint64_t s : seqs) {
      REQUIRE(rig.dispatched.back() == s);
      rig.sched.complete(rig.txns[rig.dispatched.size() - 1]);
    }
    REQUIRE(rig.dispatched == seqs);
  }
}

TEST_CASE("submit ordering contract") {
  Rig rig(64);
  rig.sched.submit(rig.txn(5, {"x"}));
  Transaction& dup = rig.txn(5, {"y"});
  REQUIRE_THROWS_AS(rig.sched.submit(dup), std::logic_error);
  Transaction& lower = rig.txn(4, {"y"});
  REQUIRE_THROWS_AS(rig.sched.submit(lower), std::logic_error);
  REQUIRE_NOTHROW(rig.sched.submit(rig.txn(6, {"y"})));
}

TEST_CASE("completing a non-head transaction is a hard failure") {
  Rig rig(64);
  Transaction& t1 = rig.txn(0, {"x"});
  Transaction& t2 = rig.txn(1, {"x"});
  rig.sched.submit(t1);
  rig.sched.submit(t2);
  REQUIRE_THROWS_AS(rig.sched.complete(t2), std::logic_error);
  Transaction& foreign = rig.txn(9, {"q"});
  REQUIRE_THROWS_AS(rig.sched.complete(foreign), std::logic_error);
}

TEST_CASE("records colliding into one slot enqueue the transaction once") {
  Rig rig(1);  // every key maps to slot 0
  Transaction& t = rig.txn(0, {"a", "b"});
  rig.sched.submit(t);
  REQUIRE(rig.sched.queue_snapshot(0) == std::vector<std::uint64_t>{0});
  REQUIRE(rig.dispatched == std::vector<std::uint64_t>{0});
  rig.sched.complete(t);
  REQUIRE(rig.sched.queue_snapshot(0).empty());

  // And the single shared queue serializes everything.
  Transaction& u1 = rig.txn(1, {"p"});
  Transaction& u2 = rig.txn(2, {"q"});
  rig.sched.submit(u1);
  rig.sched.submit(u2);
  REQUIRE(rig.count(1) == 1);
  REQUIRE(rig.count(2) == 0);  // false positive serializes, never reorders
  rig.sched.complete(u1);
  REQUIRE(rig.count(2) == 1);
}

TEST_CASE("slot queues stay seq-sorted under churn") {
  Rig rig(4);  // heavy aliasing on purpose
  Rng rng(77);
  std::vector<Transaction*> live;
  std::uint64_t next_seq = 0;
  for (int step = 0; step < 400; ++step) {
    const bool do_submit = live.size() < 3 || rng.bounded(2) == 0;
    if (do_submit) {
      std::vector<std::string> keys;
      const std::size_t nk = 1 + rng.bounded(3);
      for (std::size_t i = 0; i < nk; ++i) {
        keys.push_back(std::string(1, 'a' + static_cast<char>(rng.bounded(6))));
      }
      Transaction& t = rig.txn(next_seq++, keys);
      rig.sched.submit(t);
      live.push_back(&t);
    } else {
      // Complete the oldest live transaction (always a queue head).
      Transaction* t = live.front();
      live.erase(live.begin());
      rig.sched.complete(*t);
    }
    for (std::uint64_t slot = 0; slot < 4; ++slot) {
      const auto q = rig.sched.queue_snapshot(slot);
      REQUIRE(std::is_sorted(q.begin(), q.end()));
      REQUIRE(std::adjacent_find(q.begin(), q.end()) == q.end());
    }
  }
  // Everything ever submitted was dispatched exactly once by the end...
  while (!live.empty()) {
    rig.sched.complete(*live.front());
    live.erase(live.begin());
  }
  for (std::uint64_t s = 0; s < next_seq; ++s) {
    REQUIRE(rig.count(s) == 1);
  }
}

TEST_CASE("scheduler operations never stack slot guards") {
  struct GuardCheck final : SchedulerProbe {
    void at(Point p, std::uint64_t, std::uint64_t) override {
      // Probes fire outside critical sections; in particular every head peek
      // (the free check) must run lock-free.
      if (p == Point::kSlotLock || p == Point::kHeadPeek) {
        REQUIRE(detail::tls_slot_guards_held == 0);
      }
      ++fired;
    }
    int fired = 0;
  } check;

  std::deque<Transaction> txns;
  std::vector<std::uint64_t> dispatched;
  IndexScheduler sched(
      16, 3, [&](Transaction& t) { dispatched.push_back(t.seq()); }, nullptr,
      &check);
  auto& t1 = txns.emplace_back(
      0, std::vector<Command>{Command::put("a", "v"), Command::put("b", "v")});
  auto& t2 = txns.emplace_back(
      1, std::vector<Command>{Command::put("b", "v"), Command::put("c", "v")});
  sched.submit(t1);
  sched.submit(t2);
  sched.complete(t1);
  sched.complete(t2);
  REQUIRE(check.fired > 0);
  REQUIRE(dispatched.size() == 2);
}

TEST_CASE("event trace records inserts, removes and dispatches") {
  EventTrace trace;
  Rig rig(64, 1, &trace);
  Transaction& t1 = rig.txn(0, {"x", "y"});
  rig.sched.submit(t1);
  rig.sched.complete(t1);

  int inserts = 0, removes = 0, dispatches = 0;
  for (const auto& e : trace.snapshot()) {
    switch (e.kind) {
      case EventTrace::Kind::kInsert:
        ++inserts;
        break;
      case EventTrace::Kind::kRemove:
        ++removes;
        break;
      case EventTrace::Kind::kDispatch:
        ++dispatches;
        break;
    }
  }
  REQUIRE(inserts == 2);
  REQUIRE(removes == 2);
  REQUIRE(dispatches == 1);

  std::ostringstream csv;
  trace.write_csv(csv);
  const std::string text = csv.str();
  REQUIRE(text.rfind("event,seq,slot,thread\n", 0) == 0);
  REQUIRE(std::count(text.begin(), text.end(), '\n') == 6);
}
