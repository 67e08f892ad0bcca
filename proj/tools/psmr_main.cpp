// Command-line front end: workload benchmarks, conflict-rate simulations and
// the randomized verification suite. All output tables are CSV; exit status
// reflects correctness checks, never performance numbers.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "psmr/conflict_sim.hpp"
#include "psmr/harness.hpp"
#include "psmr/workload.hpp"

namespace {

using namespace psmr;

struct OutStream {
  std::ostream* os = &std::cout;
  std::ofstream file;

  void open(const std::string& path) {
    if (path.empty() || path == "-") return;
    file.open(path, std::ios::binary);  // LF line endings, verbatim
    if (!file) throw CLI::ValidationError("--out", "cannot open " + path);
    os = &file;
  }
  std::ostream& get() { return *os; }
};

SchedulerKind parse_kind(const std::string& name) {
  if (name == "cbase") return SchedulerKind::kCbase;
  if (name == "batch") return SchedulerKind::kBatch;
  if (name == "fast") return SchedulerKind::kIndex;
  throw CLI::ValidationError("--scheduler", "must be cbase, batch or fast");
}

constexpr char kBenchHeader[] =
    "scheduler,workers,batch_size,hashmap_size,conflict_rate,txns,"
    "throughput_tps,comparisons,wall_ms,consistent";

struct BenchOptions {
  std::string scheduler = "fast";
  int workers = 8;
  std::uint64_t txns = 100'000;
  double conflict_rate = 0.0;
  std::uint32_t conflict_window = 1000;
  std::uint32_t commands_per_txn = 1;
  std::uint64_t record_universe = 100'000'000;
  std::size_t batch_size = 200;
  std::size_t bitmap_bits = BatchScheduler::kDefaultBitmapBits;
  std::size_t hashmap_size = IndexScheduler::kDefaultSlots;
  unsigned replicas = 2;
  std::uint64_t seed = 42;
  std::int64_t timeout_ms = 0;
  std::uint32_t exec_sleep_us = 50;
  std::uint32_t jitter_us = 0;
  bool no_prefeed = false;
  std::string out;
  std::string trace_out;
  std::string workload_config;
};

int run_bench(const BenchOptions& opt, const CLI::App& cmd) {
  // Workload shape: defaults, then the config file, then explicit flags.
  WorkloadSpec spec;
  spec.txn_count = opt.txns;
  spec.conflict_rate = opt.conflict_rate;
  spec.window = opt.conflict_window;
  spec.commands_per_txn = opt.commands_per_txn;
  spec.record_universe = opt.record_universe;
  spec.seed = opt.seed;
  if (!opt.workload_config.empty()) {
    spec = load_workload_config(opt.workload_config, spec);
    if (cmd.count("--txns")) spec.txn_count = opt.txns;
    if (cmd.count("--conflict-rate")) spec.conflict_rate = opt.conflict_rate;
    if (cmd.count("--conflict-window")) spec.window = opt.conflict_window;
    if (cmd.count("--commands-per-txn")) {
      spec.commands_per_txn = opt.commands_per_txn;
    }
    if (cmd.count("--record-universe")) {
      spec.record_universe = opt.record_universe;
    }
    if (cmd.count("--seed")) spec.seed = opt.seed;
  }

  std::cerr << "bench: scheduler=" << opt.scheduler << " workers="
            << opt.workers << " txns=" << spec.txn_count << " conflict_rate="
            << spec.conflict_rate << " seed=" << spec.seed << "\n";

  TotalOrderLog log = generate_workload(spec);

  RunConfig cfg;
  cfg.kind = parse_kind(opt.scheduler);
  cfg.workers = opt.workers;
  cfg.hashmap_slots = opt.hashmap_size;
  cfg.batch_size = opt.batch_size;
  cfg.bitmap_bits = opt.bitmap_bits;
  cfg.hash_seed = derive_seed(spec.seed, 0x4a51);
  cfg.exec_sleep_us = opt.exec_sleep_us;
  cfg.jitter_max_us = opt.jitter_us;
  cfg.jitter_seed = derive_seed(spec.seed, 0x71);
  cfg.prefeed = !opt.no_prefeed;
  cfg.timeout = std::chrono::milliseconds(opt.timeout_ms);

  ConsistencyReport report =
      run_replicas(log, cfg, opt.replicas == 0 ? 1 : opt.replicas);

  double tput_sum = 0.0;
  double wall_sum = 0.0;
  for (const RunResult& r : report.replicas) {
    tput_sum += static_cast<double>(log.size()) / (r.wall_ms / 1000.0);
    wall_sum += r.wall_ms;
  }
  const double tput = tput_sum / static_cast<double>(report.replicas.size());
  const double wall = wall_sum / static_cast<double>(report.replicas.size());
  const bool consistent = report.pass();

  OutStream out;
  out.open(opt.out);
  out.get() << kBenchHeader << "\n"
            << opt.scheduler << ',' << opt.workers << ',' << opt.batch_size
            << ',' << opt.hashmap_size << ',' << spec.conflict_rate << ','
            << log.size() << ',' << static_cast<std::uint64_t>(tput) << ','
            << report.replicas.front().comparisons << ',' << wall << ','
            << (consistent ? 1 : 0) << "\n";

  if (!opt.trace_out.empty()) {
    std::ofstream tf(opt.trace_out, std::ios::binary);
    write_trace_csv(report.replicas.front().trace, 0, tf);
  }

  if (!consistent) {
    for (std::size_t i = 0; i < report.replicas.size(); ++i) {
      const RunResult& r = report.replicas[i];
      if (r.consistent() && report.digests_match()) continue;
      std::cerr << "replica " << i << ": timed_out=" << r.timed_out
                << " unfinished=" << r.unfinished << " exactly_once="
                << r.exactly_once_violations << " order=" << r.order_violations
                << " dispatch=" << r.dispatch_violations << " digest="
                << r.digest << "\n";
      if (!r.stuck_seqs.empty()) {
        std::cerr << "  stuck seqs:";
        for (std::uint64_t s : r.stuck_seqs) std::cerr << ' ' << s;
        std::cerr << "\n";
      }
    }
    std::cerr << "bench: CONSISTENCY FAILURE (seed " << spec.seed << ")\n";
    return 1;
  }
  return 0;
}

struct SimulateOptions {
  std::string model = "index";
  std::size_t hashmap_size = 102'400;
  std::size_t bitmap_bits = 102'400;
  std::size_t batch_size = 200;
  std::uint64_t queue_len = 10'000;
  std::uint64_t trials = 1'000'000;
  std::uint64_t universe = 100'000'000;
  std::uint64_t seed = 42;
  unsigned shards = 1;
  std::string out;
};

int run_simulate(const SimulateOptions& opt) {
  SimParams p;
  p.queue_len = opt.queue_len;
  p.trials = opt.trials;
  p.universe = opt.universe;
  p.seed = opt.seed;
  p.shards = opt.shards;

  OutStream out;
  out.open(opt.out);
  out.get() << "model,H_or_B,m,q,trials,rate\n";
  const auto emit = [&](const char* model, std::size_t size, std::size_t m,
                        double rate) {
    out.get() << model << ',' << size << ',' << m << ',' << opt.queue_len
              << ',' << opt.trials << ',' << rate << "\n";
  };
  if (opt.model == "index" || opt.model == "both") {
    emit("index", opt.hashmap_size, 1,
         simulate_index_rate(opt.hashmap_size, p));
  }
  if (opt.model == "batch" || opt.model == "both") {
    emit("batch", opt.bitmap_bits, opt.batch_size,
         simulate_batch_rate(opt.bitmap_bits, opt.batch_size, p));
  }
  if (opt.model != "index" && opt.model != "batch" && opt.model != "both") {
    std::cerr << "simulate: unknown model " << opt.model << "\n";
    return 2;
  }
  return 0;
}

struct VerifyOptions {
  unsigned seeds = 100;
  std::uint64_t txns = 200;
  int workers = 8;
  std::uint64_t seed = 42;
};

int run_verify(const VerifyOptions& opt) {
  std::cerr << "verify: seeds=" << opt.seeds << " txns=" << opt.txns
            << " workers=" << opt.workers << " base_seed=" << opt.seed << "\n";
  const double rates[] = {0.0, 0.1, 0.3, 0.7, 1.0};
  const std::size_t slot_counts[] = {16, 64, 1024, 102'400};

  unsigned oracle_checks = 0;
  unsigned digest_checks = 0;
  for (unsigned i = 0; i < opt.seeds; ++i) {
    const std::uint64_t seed = derive_seed(opt.seed, i);
    WorkloadSpec spec;
    spec.txn_count = opt.txns;
    spec.conflict_rate = rates[i % (sizeof(rates) / sizeof(rates[0]))];
    spec.window = 32;
    spec.commands_per_txn = 1 + i % 3;
    spec.seed = seed;
    TotalOrderLog log = generate_workload(spec);

    RunConfig cfg;
    cfg.workers = opt.workers;
    cfg.hashmap_slots =
        slot_counts[i % (sizeof(slot_counts) / sizeof(slot_counts[0]))];
    cfg.batch_size = 1 + i % 8;
    cfg.bitmap_bits = 1 << 16;
    cfg.hash_seed = derive_seed(seed, 2);
    cfg.jitter_max_us = 100;
    cfg.jitter_seed = derive_seed(seed, 3);

    std::uint64_t digests[3];
    int k = 0;
    for (SchedulerKind kind :
         {SchedulerKind::kIndex, SchedulerKind::kCbase, SchedulerKind::kBatch}) {
      cfg.kind = kind;
      RunResult r = run_replica(log, cfg);
      if (!r.consistent()) {
        std::cerr << "verify: seed index " << i << " (" << scheduler_name(kind)
                  << "): inconsistent run (unfinished=" << r.unfinished
                  << ", exactly_once=" << r.exactly_once_violations
                  << ", order=" << r.order_violations << ")\n";
        return 1;
      }
      digests[k++] = r.digest;
      if (kind == SchedulerKind::kIndex) {
        const SlotConflict oracle(log, cfg.hashmap_slots, cfg.hash_seed);
        const VerifyResult v = verify_schedule(log, r.trace, oracle);
        if (!v.pass) {
          std::cerr << "verify: seed index " << i
                    << ": schedule oracle failed: " << v.message << "\n";
          return 1;
        }
        ++oracle_checks;
      }
    }
    if (digests[0] != digests[1] || digests[1] != digests[2]) {
      std::cerr << "verify: seed index " << i
                << ": schedulers disagree on the final state\n";
      return 1;
    }
    ++digest_checks;
  }
  std::cout << "verify: OK (" << oracle_checks << " schedule-oracle checks, "
            << digest_checks << " cross-scheduler digest checks)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel state-machine-replication scheduling toolkit"};
  app.require_subcommand(1);

  BenchOptions bench;
  CLI::App* b = app.add_subcommand(
      "bench", "Run one scheduler over a generated workload, emit a CSV row");
  b->add_option("--scheduler", bench.scheduler, "cbase | batch | fast")
      ->envname("PSMR_SCHEDULER");
  b->add_option("--workers", bench.workers, "worker threads per replica")
      ->envname("PSMR_WORKERS");
  b->add_option("--txns", bench.txns, "transactions in the log")
      ->envname("PSMR_TXNS");
  b->add_option("--conflict-rate", bench.conflict_rate, "target rate in [0,1]")
      ->envname("PSMR_CONFLICT_RATE");
  b->add_option("--conflict-window", bench.conflict_window,
                "reuse window for conflict generation")
      ->envname("PSMR_CONFLICT_WINDOW");
  b->add_option("--commands-per-txn", bench.commands_per_txn,
                "commands per transaction");
  b->add_option("--record-universe", bench.record_universe, "key space size");
  b->add_option("--batch-size", bench.batch_size, "batch scheduler batch size")
      ->envname("PSMR_BATCH_SIZE");
  b->add_option("--bitmap-size", bench.bitmap_bits, "bitmap bits per batch")
      ->envname("PSMR_BITMAP_SIZE");
  b->add_option("--hashmap-size", bench.hashmap_size, "index slot count")
      ->envname("PSMR_HASHMAP_SIZE");
  b->add_option("--replicas", bench.replicas, "simulated replicas")
      ->envname("PSMR_REPLICAS");
  b->add_option("--seed", bench.seed, "master seed (printed, reproduces runs)")
      ->envname("PSMR_SEED");
  b->add_option("--timeout-ms", bench.timeout_ms,
                "liveness timeout (0 = 30s per 100k txns)")
      ->envname("PSMR_TIMEOUT_MS");
  b->add_option("--exec-sleep-us", bench.exec_sleep_us,
                "simulated execution cost per transaction");
  b->add_option("--jitter-us", bench.jitter_us,
                "max random pre-execution delay");
  b->add_flag("--no-prefeed", bench.no_prefeed,
              "feed concurrently instead of loading the backlog first");
  b->add_option("--out", bench.out, "CSV path (default stdout)")
      ->envname("PSMR_OUT");
  b->add_option("--trace-out", bench.trace_out,
                "write replica 0 execution trace CSV here");
  b->add_option("--workload-config", bench.workload_config,
                "key=value workload file (flags override it)");

  SimulateOptions sim;
  CLI::App* s = app.add_subcommand(
      "simulate", "False-positive conflict-rate simulation, emit CSV");
  s->add_option("--model", sim.model, "index | batch | both");
  s->add_option("--hashmap-size", sim.hashmap_size, "index slot count");
  s->add_option("--bitmap-size", sim.bitmap_bits, "bitmap bits per batch");
  s->add_option("--batch-size", sim.batch_size, "transactions per batch");
  s->add_option("--queue-len", sim.queue_len, "pending transactions in window");
  s->add_option("--trials", sim.trials, "simulation trials");
  s->add_option("--record-universe", sim.universe, "key space size");
  s->add_option("--seed", sim.seed, "simulation seed");
  s->add_option("--shards", sim.shards, "parallel shards (fixed => same result)");
  s->add_option("--out", sim.out, "CSV path (default stdout)");

  VerifyOptions ver;
  CLI::App* v = app.add_subcommand(
      "verify", "Randomized correctness suite across seeds and schedulers");
  v->add_option("--seeds", ver.seeds, "number of seeded random logs");
  v->add_option("--txns", ver.txns, "transactions per log");
  v->add_option("--workers", ver.workers, "worker threads");
  v->add_option("--seed", ver.seed, "base seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (b->parsed()) return run_bench(bench, *b);
    if (s->parsed()) return run_simulate(sim);
    if (v->parsed()) return run_verify(ver);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
