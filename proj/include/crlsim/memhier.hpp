#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crlsim/error.hpp"

namespace crlsim {

enum class Level : std::uint8_t { L1, L2, LLC, DRAM };

inline std::string_view to_string(Level l) {
  switch (l) {
    case Level::L1: return "L1";
    case Level::L2: return "L2";
    case Level::LLC: return "LLC";
    case Level::DRAM: return "DRAM";
  }
  return "?";
}

struct CacheConfig {
  std::uint64_t size_bytes = 0;
  std::uint64_t line_bytes = 64;
  std::uint64_t associativity = 0;
  std::uint64_t latency_cycles = 0;

  std::uint64_t n_sets() const { return size_bytes / (line_bytes * associativity); }

  void validate(const std::string& name) const {
    if (size_bytes == 0) throw ConfigError(name + ".size", "must be > 0");
    if (line_bytes == 0) throw ConfigError("line_bytes", "must be > 0");
    if (associativity == 0) throw ConfigError(name + ".assoc", "must be > 0");
    if (latency_cycles == 0) throw ConfigError(name + ".latency", "must be > 0");
    if (size_bytes % (line_bytes * associativity) != 0)
      throw ConfigError(name + ".size", "must be divisible by line_bytes * assoc");
  }
};

struct DramConfig {
  std::uint64_t service_latency = 200;
  std::uint64_t min_gap = 10;  // one request may start service every min_gap cycles

  void validate() const {
    if (service_latency == 0) throw ConfigError("dram.service_latency", "must be > 0");
    if (min_gap == 0) throw ConfigError("dram.min_gap", "must be > 0");
  }
};

struct HierarchyConfig {
  CacheConfig l1{32 * 1024, 64, 8, 4};
  CacheConfig l2{256 * 1024, 64, 8, 14};
  CacheConfig llc{2 * 1024 * 1024, 64, 16, 40};
  DramConfig dram{};

  void validate() const {
    l1.validate("l1");
    l2.validate("l2");
    llc.validate("llc");
    dram.validate();
    if (l1.line_bytes != l2.line_bytes || l2.line_bytes != llc.line_bytes)
      throw ConfigError("line_bytes", "all levels must share one line size");
  }
};

struct CacheLineMeta {
  std::uint64_t tag = 0;  // full line address
  bool valid = false;
  bool prefetched = false;  // fill was prefetch-initiated and no demand has hit it yet
  bool counted = false;     // prefetch was issued inside the measured window
  unsigned pf_core = 0;
  std::uint64_t lru_stamp = 0;
  std::uint64_t ready_cycle = 0;  // data usable from this cycle on
};

// Set-associative cache with true LRU by timestamp.
class SetAssocCache {
 public:
  explicit SetAssocCache(const CacheConfig& cfg)
      : sets_(cfg.n_sets()), ways_(cfg.associativity), lines_(sets_ * ways_) {}

  std::uint64_t n_sets() const { return sets_; }
  std::uint64_t ways() const { return ways_; }

  CacheLineMeta* find(std::uint64_t line) {
    auto* base = &lines_[set_of(line) * ways_];
    for (std::uint64_t w = 0; w < ways_; ++w)
      if (base[w].valid && base[w].tag == line) return &base[w];
    return nullptr;
  }
  const CacheLineMeta* find(std::uint64_t line) const { return const_cast<SetAssocCache*>(this)->find(line); }

  void touch(CacheLineMeta& m) { m.lru_stamp = ++clock_; }

  // line must not be resident. Returns the displaced line when a valid victim
  // was replaced.
  std::optional<CacheLineMeta> insert(std::uint64_t line, CacheLineMeta init) {
    auto* base = &lines_[set_of(line) * ways_];
    CacheLineMeta* victim = &base[0];
    for (std::uint64_t w = 0; w < ways_; ++w) {
      if (!base[w].valid) { victim = &base[w]; break; }
      if (base[w].lru_stamp < victim->lru_stamp) victim = &base[w];
    }
    std::optional<CacheLineMeta> evicted;
    if (victim->valid) evicted = *victim;
    init.tag = line;
    init.valid = true;
    init.lru_stamp = ++clock_;
    *victim = init;
    return evicted;
  }

  template <class F>
  void for_each_valid(F&& f) {
    for (auto& m : lines_)
      if (m.valid) f(m);
  }

 private:
  std::uint64_t set_of(std::uint64_t line) const { return line % sets_; }

  std::uint64_t sets_;
  std::uint64_t ways_;
  std::vector<CacheLineMeta> lines_;
  std::uint64_t clock_ = 0;
};

// Single-channel DRAM: fixed service latency, one service start per min_gap.
class DramModel {
 public:
  struct Grant {
    std::uint64_t start;
    std::uint64_t complete;
  };

  explicit DramModel(const DramConfig& cfg) : cfg_(cfg) {}

  Grant issue(std::uint64_t cycle) {
    while (!outstanding_.empty() && outstanding_.front() <= cycle) outstanding_.pop_front();
    std::uint64_t start = std::max(cycle, next_free_cycle_);
    next_free_cycle_ = start + cfg_.min_gap;
    Grant g{start, start + cfg_.service_latency};
    outstanding_.push_back(g.complete);
    return g;
  }

  // Requests not yet completed at `cycle` over the number the channel can
  // keep in service at once, capped at 1.
  double occupancy(std::uint64_t cycle) const {
    auto it = std::upper_bound(outstanding_.begin(), outstanding_.end(), cycle);
    auto n = static_cast<double>(outstanding_.end() - it);
    return std::min(1.0, n / static_cast<double>(capacity()));
  }

  std::uint64_t capacity() const { return (cfg_.service_latency + cfg_.min_gap - 1) / cfg_.min_gap; }
  std::uint64_t next_free_cycle() const { return next_free_cycle_; }
  const DramConfig& config() const { return cfg_; }

 private:
  DramConfig cfg_;
  std::uint64_t next_free_cycle_ = 0;
  std::deque<std::uint64_t> outstanding_;  // completion cycles, ascending
};

struct LevelCounters {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t accesses() const { return hits + misses; }
};

// Per-core counters kept by the hierarchy. Prefetch fills and useless
// evictions go to the issuing core, covered hits to the demanding core.
struct HierarchyCounters {
  LevelCounters l1, l2, llc;
  std::uint64_t prefetch_requests = 0;   // every prefetch_fill call
  std::uint64_t prefetch_dram = 0;       // requests that reached DRAM
  std::uint64_t prefetch_fills = 0;
  std::uint64_t covered_timely = 0;
  std::uint64_t covered_late = 0;        // demand merged into an in-flight prefetch
  std::uint64_t useless_evictions = 0;
  std::uint64_t duplicate_in_cache = 0;
  std::uint64_t duplicate_in_flight = 0;
  std::uint64_t dram_requests = 0;       // demand + prefetch
  std::uint64_t dram_busy_cycles = 0;
};

struct DemandResult {
  Level serviced = Level::L1;
  std::uint64_t stall_cycles = 0;
  bool was_prefetch_covered = false;
  bool late = false;  // covered by a prefetch still in flight
};

enum class PrefetchStatus { issued, duplicate_in_cache, duplicate_in_flight };

struct PrefetchIssue {
  PrefetchStatus status = PrefetchStatus::issued;
  std::uint64_t fill_complete_cycle = 0;
};

struct FillEvent {
  std::uint64_t line = 0;
  std::uint64_t cycle = 0;
  std::vector<unsigned> requesters;  // issuing core first, then merged duplicates
};

// Private L1/L2 per core, shared LLC, one DRAM channel. Demand fills are
// inclusive along the walk path; prefetch fills land at the target level.
class MemoryHierarchy {
 public:
  MemoryHierarchy(const HierarchyConfig& cfg, unsigned n_cores) : cfg_(cfg), llc_(cfg.llc), dram_(cfg.dram) {
    cfg_.validate();
    if (n_cores == 0) throw ConfigError("n_cores", "must be >= 1");
    for (unsigned c = 0; c < n_cores; ++c) {
      l1_.emplace_back(cfg.l1);
      l2_.emplace_back(cfg.l2);
    }
    counters_.resize(n_cores);
    measuring_.assign(n_cores, true);
  }

  unsigned n_cores() const { return static_cast<unsigned>(l1_.size()); }
  const HierarchyConfig& config() const { return cfg_; }
  std::uint64_t line_of(std::uint64_t addr) const { return addr / cfg_.llc.line_bytes; }
  std::uint64_t line_bytes() const { return cfg_.llc.line_bytes; }

  // Zeroes the core's counters and marks later prefetches it issues as counted.
  void begin_measurement(unsigned core) {
    counters_[core] = HierarchyCounters{};
    measuring_[core] = true;
  }
  void pause_measurement(unsigned core) { measuring_[core] = false; }

  const HierarchyCounters& counters(unsigned core) const { return counters_[core]; }

  DemandResult demand_access(unsigned core, std::uint64_t addr, std::uint64_t cycle) {
    const std::uint64_t line = line_of(addr);
    auto& cnt = counters_[core];
    DemandResult r;

    if (auto* m = l1_[core].find(line)) {
      l1_[core].touch(*m);
      ++cnt.l1.hits;
      r.serviced = Level::L1;
      r.stall_cycles = cfg_.l1.latency_cycles;
      return r;
    }
    ++cnt.l1.misses;

    if (auto* m = l2_[core].find(line)) {
      l2_[core].touch(*m);
      ++cnt.l2.hits;
      consume_prefetch_bit(*m, core, r);
      std::uint64_t ready = std::max(cycle + cfg_.l2.latency_cycles, m->ready_cycle);
      fill_private(core, line, ready, /*into_l2=*/false);
      r.serviced = Level::L2;
      r.stall_cycles = ready - cycle;
      return r;
    }
    ++cnt.l2.misses;

    if (auto* m = llc_.find(line)) {
      llc_.touch(*m);
      ++cnt.llc.hits;
      consume_prefetch_bit(*m, core, r);
      std::uint64_t ready = std::max(cycle + cfg_.llc.latency_cycles, m->ready_cycle);
      fill_private(core, line, ready, true);
      r.serviced = Level::LLC;
      r.stall_cycles = ready - cycle;
      return r;
    }
    ++cnt.llc.misses;

    std::uint64_t ready;
    if (auto it = inflight_.find(line); it != inflight_.end()) {
      it->second.merged = true;
      if (it->second.counted) ++cnt.covered_late;
      r.was_prefetch_covered = true;
      r.late = true;
      ready = std::max(cycle + cfg_.llc.latency_cycles, it->second.complete);
    } else {
      auto g = dram_.issue(cycle + cfg_.llc.latency_cycles);
      ++cnt.dram_requests;
      cnt.dram_busy_cycles += cfg_.dram.min_gap;
      ready = g.complete;
    }
    insert_llc(line, CacheLineMeta{.ready_cycle = ready});
    fill_private(core, line, ready, true);
    r.serviced = Level::DRAM;
    r.stall_cycles = ready - cycle;
    return r;
  }

  PrefetchIssue prefetch_fill(unsigned core, std::uint64_t addr, Level target, std::uint64_t issue_cycle) {
    if (target != Level::L2 && target != Level::LLC) throw ConfigError("prefetch.target", "must be L2 or LLC");
    const std::uint64_t line = line_of(addr);
    auto& cnt = counters_[core];
    ++cnt.prefetch_requests;
    if (resident(core, line, target)) {
      ++cnt.duplicate_in_cache;
      return {PrefetchStatus::duplicate_in_cache, issue_cycle};
    }
    if (auto it = inflight_.find(line); it != inflight_.end()) {
      ++cnt.duplicate_in_flight;
      auto& req = it->second.requesters;
      if (std::find(req.begin(), req.end(), core) == req.end()) req.push_back(core);
      return {PrefetchStatus::duplicate_in_flight, it->second.complete};
    }
    std::uint64_t complete;
    const CacheLineMeta* in_llc = target == Level::L2 ? llc_.find(line) : nullptr;
    if (in_llc) {
      complete = std::max(issue_cycle + cfg_.llc.latency_cycles, in_llc->ready_cycle);
    } else {
      auto g = dram_.issue(issue_cycle);
      ++cnt.prefetch_dram;
      ++cnt.dram_requests;
      cnt.dram_busy_cycles += cfg_.dram.min_gap;
      complete = g.complete;
    }
    inflight_.emplace(line, InFlight{complete, target, core, {core}, measuring_[core], false});
    pending_.push(PendingFill{complete, next_fill_seq_++, line});
    return {PrefetchStatus::issued, complete};
  }

  // Completes every prefetch fill due at or before `cycle`, in completion order.
  std::vector<FillEvent> advance_to(std::uint64_t cycle) {
    std::vector<FillEvent> events;
    while (!pending_.empty() && pending_.top().complete <= cycle) {
      auto p = pending_.top();
      pending_.pop();
      auto it = inflight_.find(p.line);
      InFlight f = std::move(it->second);
      inflight_.erase(it);
      if (f.counted) ++counters_[f.core].prefetch_fills;
      if (!f.merged) {
        CacheLineMeta meta{.prefetched = true, .counted = f.counted, .pf_core = f.core, .ready_cycle = p.complete};
        if (f.target == Level::L2) {
          if (!l2_[f.core].find(p.line)) insert_private(l2_[f.core], p.line, meta);
          if (!llc_.find(p.line)) insert_llc(p.line, CacheLineMeta{.ready_cycle = p.complete});
        } else if (!llc_.find(p.line)) {
          insert_llc(p.line, meta);
        }
      }
      events.push_back(FillEvent{p.line, p.complete, std::move(f.requesters)});
    }
    return events;
  }

  std::vector<FillEvent> drain() { return advance_to(std::numeric_limits<std::uint64_t>::max()); }

  // Counts still-unreferenced prefetched lines as useless and clears their bits.
  std::uint64_t flush_unused_prefetches() {
    std::uint64_t n = 0;
    auto flush = [&](CacheLineMeta& m) {
      if (m.prefetched && m.counted) {
        ++counters_[m.pf_core].useless_evictions;
        ++n;
      }
      m.prefetched = false;
    };
    llc_.for_each_valid(flush);
    for (auto& c : l2_) c.for_each_valid(flush);
    return n;
  }

  bool resident(unsigned core, std::uint64_t line, Level level) const {
    switch (level) {
      case Level::L1: return l1_[core].find(line) != nullptr;
      case Level::L2: return l2_[core].find(line) != nullptr;
      case Level::LLC: return llc_.find(line) != nullptr;
      case Level::DRAM: return true;
    }
    return false;
  }
  bool in_flight(std::uint64_t line) const { return inflight_.count(line) != 0; }
  std::size_t in_flight_count() const { return inflight_.size(); }
  double dram_occupancy(std::uint64_t cycle) const { return dram_.occupancy(cycle); }
  const DramModel& dram() const { return dram_; }

 private:
  struct InFlight {
    std::uint64_t complete;
    Level target;
    unsigned core;
    std::vector<unsigned> requesters;
    bool counted;
    bool merged;  // a demand already consumed this fill
  };
  struct PendingFill {
    std::uint64_t complete;
    std::uint64_t seq;
    std::uint64_t line;
    bool operator>(const PendingFill& o) const {
      return complete != o.complete ? complete > o.complete : seq > o.seq;
    }
  };

  void consume_prefetch_bit(CacheLineMeta& m, unsigned core, DemandResult& r) {
    if (!m.prefetched) return;
    m.prefetched = false;
    r.was_prefetch_covered = true;
    if (m.counted) ++counters_[core].covered_timely;
  }

  void note_eviction(const std::optional<CacheLineMeta>& ev) {
    if (ev && ev->prefetched && ev->counted) ++counters_[ev->pf_core].useless_evictions;
  }

  void insert_llc(std::uint64_t line, CacheLineMeta meta) { note_eviction(llc_.insert(line, meta)); }
  void insert_private(SetAssocCache& c, std::uint64_t line, CacheLineMeta meta) { note_eviction(c.insert(line, meta)); }

  void fill_private(unsigned core, std::uint64_t line, std::uint64_t ready, bool into_l2) {
    if (into_l2 && !l2_[core].find(line)) insert_private(l2_[core], line, CacheLineMeta{.ready_cycle = ready});
    if (!l1_[core].find(line)) insert_private(l1_[core], line, CacheLineMeta{.ready_cycle = ready});
  }

  HierarchyConfig cfg_;
  std::vector<SetAssocCache> l1_, l2_;
  SetAssocCache llc_;
  DramModel dram_;
  std::unordered_map<std::uint64_t, InFlight> inflight_;
  std::priority_queue<PendingFill, std::vector<PendingFill>, std::greater<>> pending_;
  std::uint64_t next_fill_seq_ = 0;
  std::vector<HierarchyCounters> counters_;
  std::vector<bool> measuring_;
};

}  // namespace crlsim
