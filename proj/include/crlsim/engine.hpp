#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "crlsim/error.hpp"
#include "crlsim/memhier.hpp"
#include "crlsim/metrics.hpp"
#include "crlsim/prefetchers.hpp"
#include "crlsim/trace.hpp"

namespace crlsim {

// Deterministic interleaving. round_robin hands out one record per core per
// turn in id order; min_clock always steps the core whose clock is furthest
// behind (lowest id on ties), so shared structures see global time order.
enum class Schedule { round_robin, min_clock };

inline const char* to_string(Schedule s) { return s == Schedule::round_robin ? "round_robin" : "min_clock"; }

inline Schedule parse_schedule(std::string_view v) {
  if (v == "round_robin") return Schedule::round_robin;
  if (v == "min_clock") return Schedule::min_clock;
  throw ConfigError("sim.schedule", "expected round_robin or min_clock, got '" + std::string(v) + "'");
}

struct SimConfig {
  unsigned n_cores = 1;
  std::uint64_t warmup_events = 50'000;
  std::uint64_t sim_events = 200'000;
  HierarchyConfig memory{};
  Level prefetch_target = Level::LLC;
  PrefetcherKind prefetcher = PrefetcherKind::none;
  RlConfig rl{};
  CoordConfig coord{};
  std::uint64_t seed = 1;
  bool concurrent = false;
  Schedule schedule = Schedule::round_robin;

  void validate() const {
    if (n_cores < 1 || n_cores > 16) throw ConfigError("n_cores", "must lie in [1, 16]");
    if (warmup_events == 0) throw ConfigError("warmup_events", "must be > 0");
    if (sim_events == 0) throw ConfigError("sim_events", "must be > 0");
    if (prefetch_target != Level::L2 && prefetch_target != Level::LLC)
      throw ConfigError("prefetch.target", "must be l2 or llc");
    memory.validate();
    coord.validate();
    // the action table has to agree with the geometry only when it is used
    if (prefetcher == PrefetcherKind::pythia_percore || prefetcher == PrefetcherKind::pythia_crl) {
      rl.validate();
    } else {
      rl.learn.validate();
      rl.rewards.validate();
    }
  }
};

struct PrefetchLogEntry {
  std::uint64_t line = 0;
  unsigned core = 0;
  std::uint64_t cycle = 0;
  PrefetchStatus status = PrefetchStatus::issued;
};

struct RunOptions {
  bool record_prefetch_log = false;
  FlowTracer tracer;
};

struct RunResult {
  RunMetrics metrics;
  std::vector<PrefetchLogEntry> prefetch_log;  // every request handed to the memory system, in issue order
  std::uint64_t eq_inserts = 0;
  std::uint64_t sarsa_updates = 0;
};

namespace detail {

// Bridges prefetchers to the hierarchy and keeps the per-core candidate and
// suppression counters the hierarchy cannot see.
class EnginePort final : public PrefetchPort {
 public:
  EnginePort(MemoryHierarchy& hier, Level target, bool record, std::mutex* mu)
      : hier_(hier), target_(target), record_(record), mu_(mu), counts_(hier.n_cores()) {}

  PrefetchStatus issue(unsigned core, std::uint64_t line, std::uint64_t cycle) override {
    auto lk = lock();
    auto r = hier_.prefetch_fill(core, line * hier_.line_bytes(), target_, cycle);
    if (record_) log_.push_back({line, core, cycle, r.status});
    return r.status;
  }
  bool resident(unsigned core, std::uint64_t line) const override {
    auto lk = lock();
    return hier_.resident(core, line, target_);
  }
  double pressure(std::uint64_t cycle) const override {
    auto lk = lock();
    return hier_.dram_occupancy(cycle);
  }
  std::uint64_t lines_per_page() const override { return kPageBytes / hier_.line_bytes(); }
  void note_candidate(unsigned core) override { ++counts_[core].candidates; }
  void note_suppressed(unsigned core, SuppressReason reason) override {
    ++counts_[core].suppressed[static_cast<std::size_t>(reason) - 1];
  }

  struct Counts {
    std::uint64_t candidates = 0;
    std::array<std::uint64_t, 3> suppressed{};
  };
  Counts& counts(unsigned core) { return counts_[core]; }
  std::vector<PrefetchLogEntry>& log() { return log_; }

 private:
  std::unique_lock<std::mutex> lock() const { return mu_ ? std::unique_lock<std::mutex>(*mu_) : std::unique_lock<std::mutex>(); }

  MemoryHierarchy& hier_;
  Level target_;
  bool record_;
  std::mutex* mu_;
  std::vector<Counts> counts_;
  std::vector<PrefetchLogEntry> log_;
};

}  // namespace detail

// Trace-driven simulation. Each record is one instruction costing one cycle;
// an L1 miss additionally blocks its core for the returned stall. The order
// in which cores consume records follows cfg.schedule. Counters restart once
// a core has consumed warmup_events records.
class Simulator {
 public:
  Simulator(const SimConfig& cfg, std::vector<CoreTrace> traces, RunOptions opts = {})
      : cfg_(cfg), traces_(std::move(traces)), opts_(std::move(opts)) {
    cfg_.validate();
    if (traces_.size() < cfg_.n_cores)
      throw TruncationError(static_cast<unsigned>(traces_.size()), "no trace supplied for this core");
    const auto need = cfg_.warmup_events + cfg_.sim_events;
    for (unsigned c = 0; c < cfg_.n_cores; ++c)
      if (traces_[c].size() < need)
        throw TruncationError(c, "trace has " + std::to_string(traces_[c].size()) + " records, run needs " +
                                     std::to_string(need));
    RlConfig rl = cfg_.rl;
    rl.learn.rng_seed = cfg_.seed;
    prefetcher_ = make_prefetcher(cfg_.prefetcher, rl, cfg_.coord, cfg_.n_cores, cfg_.concurrent);
    if (auto* r = dynamic_cast<RlPrefetcherBase*>(prefetcher_.get()); r && opts_.tracer) r->set_tracer(opts_.tracer);
  }

  Prefetcher& prefetcher() { return *prefetcher_; }

  RunResult run() {
    MemoryHierarchy hier(cfg_.memory, cfg_.n_cores);
    std::mutex mu;
    detail::EnginePort port(hier, cfg_.prefetch_target, opts_.record_prefetch_log, cfg_.concurrent ? &mu : nullptr);
    const unsigned n = cfg_.n_cores;
    std::vector<CoreState> cores(n);
    for (unsigned c = 0; c < n; ++c) hier.pause_measurement(c);

    auto step = [&](unsigned k) {
      auto& cs = cores[k];
      const auto& rec = traces_[k][cs.consumed];
      const std::uint64_t c = cs.clock;
      const std::uint64_t line = hier.line_of(rec.addr);
      DemandResult res;
      {
        std::unique_lock<std::mutex> lk = cfg_.concurrent ? std::unique_lock<std::mutex>(mu) : std::unique_lock<std::mutex>();
        auto fills = hier.advance_to(c);
        if (cfg_.concurrent) lk.unlock();
        dispatch(fills);
        if (cfg_.concurrent) lk.lock();
        res = hier.demand_access(k, rec.addr, c);
      }
      prefetcher_->on_demand_access(rec, line, res, c, port);
      cs.clock += 1 + (res.serviced == Level::L1 ? 0 : res.stall_cycles);
      ++cs.consumed;
      if (cs.consumed == cfg_.warmup_events) {
        std::unique_lock<std::mutex> lk = cfg_.concurrent ? std::unique_lock<std::mutex>(mu) : std::unique_lock<std::mutex>();
        hier.begin_measurement(k);
        port.counts(k) = {};
        cs.measure_start = cs.clock;
      }
    };

    const std::uint64_t total = cfg_.warmup_events + cfg_.sim_events;
    if (!cfg_.concurrent) {
      if (cfg_.schedule == Schedule::round_robin) {
        for (std::uint64_t i = 0; i < total; ++i)
          for (unsigned c = 0; c < n; ++c) step(c);
      } else {
        for (;;) {
          unsigned pick = n;
          for (unsigned c = 0; c < n; ++c)
            if (cores[c].consumed < total && (pick == n || cores[c].clock < cores[pick].clock)) pick = c;
          if (pick == n) break;
          step(pick);
        }
      }
    } else {
      std::vector<std::thread> workers;
      for (unsigned k = 0; k < n; ++k)
        workers.emplace_back([&, k] {
          while (cores[k].consumed < total) step(k);
        });
      for (auto& w : workers) w.join();
    }

    dispatch(hier.drain());
    prefetcher_->finish();
    hier.flush_unused_prefetches();

    RunResult out;
    out.metrics.cores.resize(n);
    for (unsigned c = 0; c < n; ++c) {
      auto& m = out.metrics.cores[c];
      const auto& h = hier.counters(c);
      m.instructions = cfg_.sim_events;
      m.cycles = cores[c].clock - cores[c].measure_start;
      m.l1 = h.l1;
      m.l2 = h.l2;
      m.llc = h.llc;
      m.prefetches_issued = port.counts(c).candidates;
      m.prefetch_requests = h.prefetch_requests;
      m.prefetch_fills = h.prefetch_fills;
      m.prefetch_covered_hits = h.covered_timely + h.covered_late;
      m.prefetch_late_hits = h.covered_late;
      m.useless_prefetch_evictions = h.useless_evictions;
      m.suppressed = port.counts(c).suppressed;
      m.duplicate_in_cache = h.duplicate_in_cache;
      m.duplicate_in_flight = h.duplicate_in_flight;
      m.dram_requests = h.dram_requests;
      m.dram_busy_cycles = h.dram_busy_cycles;
    }
    out.prefetch_log = std::move(port.log());
    if (auto* r = dynamic_cast<RlPrefetcherBase*>(prefetcher_.get())) {
      out.eq_inserts = r->inserts();
      out.sarsa_updates = r->updates_emitted();
    }
    return out;
  }

 private:
  struct CoreState {
    std::uint64_t clock = 0;
    std::uint64_t consumed = 0;
    std::uint64_t measure_start = 0;
  };

  void dispatch(const std::vector<FillEvent>& fills) {
    for (const auto& f : fills)
      for (auto core : f.requesters) prefetcher_->on_fill(f.line, core, f.cycle);
  }

  SimConfig cfg_;
  std::vector<CoreTrace> traces_;
  RunOptions opts_;
  std::unique_ptr<Prefetcher> prefetcher_;
};

inline RunResult run(const SimConfig& cfg, const std::vector<CoreTrace>& traces, RunOptions opts = {}) {
  return Simulator(cfg, traces, std::move(opts)).run();
}

// LLC demand misses of the same traces with prefetching disabled.
inline RunMetrics run_baseline(const SimConfig& cfg, const std::vector<CoreTrace>& traces) {
  SimConfig base = cfg;
  base.prefetcher = PrefetcherKind::none;
  base.concurrent = false;
  return run(base, traces).metrics;
}

inline std::uint64_t run_baseline_misses(const SimConfig& cfg, const std::vector<CoreTrace>& traces) {
  return run_baseline(cfg, traces).aggregate().llc.misses;
}

}  // namespace crlsim
