#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crlsim/coordination.hpp"
#include "crlsim/error.hpp"
#include "crlsim/eval_queue.hpp"
#include "crlsim/memhier.hpp"
#include "crlsim/rl.hpp"
#include "crlsim/trace.hpp"

namespace crlsim {

enum class PrefetcherKind { none, next_line, stride, pythia_percore, pythia_crl };

inline std::string_view to_string(PrefetcherKind k) {
  switch (k) {
    case PrefetcherKind::none: return "none";
    case PrefetcherKind::next_line: return "next_line";
    case PrefetcherKind::stride: return "stride";
    case PrefetcherKind::pythia_percore: return "pythia_percore";
    case PrefetcherKind::pythia_crl: return "pythia_crl";
  }
  return "?";
}

inline PrefetcherKind parse_prefetcher_kind(std::string_view s) {
  for (auto k : {PrefetcherKind::none, PrefetcherKind::next_line, PrefetcherKind::stride,
                 PrefetcherKind::pythia_percore, PrefetcherKind::pythia_crl})
    if (s == to_string(k)) return k;
  throw ConfigError("prefetcher", "unknown prefetcher kind '" + std::string(s) + "'");
}

// What the simulator exposes to a prefetcher. All line arguments are line
// addresses; residency is checked at the configured prefetch target level.
class PrefetchPort {
 public:
  virtual ~PrefetchPort() = default;
  virtual PrefetchStatus issue(unsigned core, std::uint64_t line, std::uint64_t cycle) = 0;
  virtual bool resident(unsigned core, std::uint64_t line) const = 0;
  virtual double pressure(std::uint64_t cycle) const = 0;
  virtual std::uint64_t lines_per_page() const = 0;
  virtual void note_candidate(unsigned core) = 0;
  virtual void note_suppressed(unsigned core, SuppressReason reason) = 0;
};

// Steps of the RL decision flow, numbered as they occur for a demand miss.
enum class FlowStep : std::uint8_t {
  eq_lookup = 1,
  extract_state = 2,
  qv_lookup = 3,
  issue = 4,
  eq_insert = 5,
  eviction_update = 6,
  fill_mark = 7,
};

struct FlowEvent {
  FlowStep step{};
  unsigned core = 0;
  std::uint64_t line = 0;    // demand line, prefetch line or filled line, per step
  double value = 0.0;        // reward for eq_lookup/eviction_update, delta for qv_lookup
  bool flag = false;         // eq_lookup: matched; eq_insert: evicted; fill_mark: marked
};

using FlowTracer = std::function<void(const FlowEvent&)>;

class Prefetcher {
 public:
  virtual ~Prefetcher() = default;
  virtual PrefetcherKind kind() const = 0;
  // Called for every demand access after the hierarchy serviced it. Returns
  // the lines handed to the memory system.
  virtual std::vector<std::uint64_t> on_demand_access(const TraceRecord& rec, std::uint64_t line,
                                                      const DemandResult& result, std::uint64_t cycle,
                                                      PrefetchPort& port) = 0;
  // A prefetch fill requested by `core` completed.
  virtual void on_fill(std::uint64_t line, unsigned core, std::uint64_t cycle) {
    (void)line, (void)core, (void)cycle;
  }
  // End of run: flush any learning state.
  virtual void finish() {}
};

class NoPrefetcher final : public Prefetcher {
 public:
  PrefetcherKind kind() const override { return PrefetcherKind::none; }
  std::vector<std::uint64_t> on_demand_access(const TraceRecord&, std::uint64_t, const DemandResult&, std::uint64_t,
                                              PrefetchPort&) override {
    return {};
  }
};

inline bool is_l1_miss(const DemandResult& r) { return r.serviced != Level::L1; }

class NextLinePrefetcher final : public Prefetcher {
 public:
  PrefetcherKind kind() const override { return PrefetcherKind::next_line; }
  std::vector<std::uint64_t> on_demand_access(const TraceRecord& rec, std::uint64_t line, const DemandResult& r,
                                              std::uint64_t cycle, PrefetchPort& port) override {
    if (!is_l1_miss(r)) return {};
    port.note_candidate(rec.core_id);
    port.issue(rec.core_id, line + 1, cycle);
    return {line + 1};
  }
};

// PC-indexed stride detector, degree 1. Trains on L1 misses and fires once
// the same non-zero stride repeats.
class StridePrefetcher final : public Prefetcher {
 public:
  explicit StridePrefetcher(std::size_t table_size = 256) : table_size_(table_size) {}
  PrefetcherKind kind() const override { return PrefetcherKind::stride; }

  std::vector<std::uint64_t> on_demand_access(const TraceRecord& rec, std::uint64_t line, const DemandResult& r,
                                              std::uint64_t cycle, PrefetchPort& port) override {
    if (!is_l1_miss(r)) return {};
    const std::uint64_t key = rec.pc ^ (std::uint64_t{rec.core_id} << 56);
    auto it = table_.find(key);
    if (it == table_.end()) {
      if (table_.size() >= table_size_) table_.erase(table_.begin());
      table_.emplace(key, Entry{line, 0, 0});
      return {};
    }
    auto& e = it->second;
    const auto delta = static_cast<std::int64_t>(line) - static_cast<std::int64_t>(e.last_line);
    if (delta == e.stride && delta != 0) {
      e.confidence = std::min(e.confidence + 1, 3);
    } else {
      e.stride = delta;
      e.confidence = 0;
    }
    e.last_line = line;
    if (e.confidence < 1) return {};
    const auto target = static_cast<std::uint64_t>(static_cast<std::int64_t>(line) + e.stride);
    port.note_candidate(rec.core_id);
    port.issue(rec.core_id, target, cycle);
    return {target};
  }

 private:
  struct Entry {
    std::uint64_t last_line;
    std::int64_t stride;
    int confidence;
  };
  std::size_t table_size_;
  std::unordered_map<std::uint64_t, Entry> table_;
};

enum class TriggerMode { miss_or_prefetch_hit, miss_only };

struct RlConfig {
  QVGeometry geometry{};
  ActionTable actions{};
  LearnParams learn{};
  bool quantized = false;
  std::size_t eq_capacity = 256;
  RewardScheme rewards{};
  TriggerMode trigger = TriggerMode::miss_or_prefetch_hit;
  std::size_t history_len = 16;

  void validate() const {
    geometry.validate();
    actions.validate();
    if (actions.size() != geometry.action_dim)
      throw ConfigError("rl.action_table", "size " + std::to_string(actions.size()) + " != qvstore.action_dim " +
                                               std::to_string(geometry.action_dim));
    learn.validate();
    rewards.validate();
    if (eq_capacity == 0) throw ConfigError("eq.capacity", "must be > 0");
    if (history_len < 3) throw ConfigError("rl.history", "must be >= 3");
  }
};

// Decision flow shared by both RL prefetchers. On an L1 miss the demand line
// is matched against the EQ; on an L2 miss (or a prefetched hit, per trigger
// mode) a state is built, an action chosen, the prefetch issued and the
// action queued for evaluation. Subclasses supply the learning structures.
class RlPrefetcherBase : public Prefetcher {
 public:
  RlPrefetcherBase(const RlConfig& cfg, unsigned n_cores) : cfg_(cfg) {
    cfg_.validate();
    for (unsigned c = 0; c < n_cores; ++c) {
      CoreAgent a;
      a.rng.seed(detail::splitmix64(cfg.learn.rng_seed ^ (0xA11CEull * (c + 1))));
      agents_.push_back(std::move(a));
    }
  }

  void set_tracer(FlowTracer t) { tracer_ = std::move(t); }
  const RlConfig& config() const { return cfg_; }
  unsigned n_cores() const { return static_cast<unsigned>(agents_.size()); }

  std::uint64_t inserts() const { return inserts_.load(); }
  std::uint64_t updates_emitted() const { return updates_.load(); }

  virtual QVStore& store(unsigned core) = 0;
  virtual EvaluationQueue& eq(unsigned core) = 0;

  std::vector<std::uint64_t> on_demand_access(const TraceRecord& rec, std::uint64_t line, const DemandResult& r,
                                              std::uint64_t cycle, PrefetchPort& port) override {
    const unsigned core = rec.core_id;
    auto& agent = agents_[core];
    agent.history.push_back(HistoryEntry{rec.pc, line});
    if (agent.history.size() > cfg_.history_len) agent.history.erase(agent.history.begin());
    std::vector<std::uint64_t> issued;
    if (is_l1_miss(r)) issued = demand_miss(agent, rec, line, r, cycle, port);
    agent.last_hit = !is_l1_miss(r);
    return issued;
  }

  void on_fill(std::uint64_t line, unsigned core, std::uint64_t cycle) override {
    (void)cycle;
    std::uint32_t owed = fills_owed(line, core);
    for (std::uint32_t i = 0; i < owed; ++i) {
      auto n = eq(core).mark_filled(line);
      trace({FlowStep::fill_mark, core, line, 0.0, n > 0});
    }
  }

  void finish() override {
    for (unsigned c = 0; c < n_cores(); ++c) {
      if (!owns_eq(c)) continue;
      for (auto& e : eq(c).drain()) {
        auto t = eq_evict_to_update(e, last_of(e.core_id));
        trace({FlowStep::eviction_update, e.core_id, e.pf_line.value_or(0), t.reward, false});
        submit(std::move(t));
      }
    }
    flush_updates();
  }

 protected:
  struct CoreAgent {
    std::vector<HistoryEntry> history;
    bool last_hit = false;
    std::optional<Successor> last;
    PolicyRng rng;
  };

  virtual void on_l1_miss(const TraceRecord& rec, std::uint64_t line, std::uint64_t cycle) {
    (void)rec, (void)line, (void)cycle;
  }
  // Returns a decision when the candidate must not reach the memory system.
  virtual std::optional<FilterDecision> screen(std::uint64_t line, unsigned core, std::uint64_t cycle,
                                               PrefetchPort& port) {
    (void)line, (void)core, (void)cycle, (void)port;
    return std::nullopt;
  }
  virtual void after_issue(std::uint64_t pc, std::uint64_t line, unsigned core, std::uint64_t cycle,
                           PrefetchStatus status) {
    (void)pc, (void)line, (void)core, (void)cycle, (void)status;
  }
  virtual std::uint32_t fills_owed(std::uint64_t line, unsigned core) {
    (void)line, (void)core;
    return 1;
  }
  virtual void submit(SarsaTuple t) = 0;
  virtual void flush_updates() {}
  // Whether finish() should drain eq(core); a shared EQ is drained once.
  virtual bool owns_eq(unsigned core) const {
    (void)core;
    return true;
  }

  std::optional<Successor> last_of(unsigned core) const {
    std::lock_guard lk(last_mu_);
    return agents_[core].last;
  }

  void trace(const FlowEvent& e) const {
    if (tracer_) tracer_(e);
  }

  RlConfig cfg_;
  std::vector<CoreAgent> agents_;

 private:
  std::vector<std::uint64_t> demand_miss(CoreAgent& agent, const TraceRecord& rec, std::uint64_t line,
                                         const DemandResult& r, std::uint64_t cycle, PrefetchPort& port) {
    const unsigned core = rec.core_id;
    on_l1_miss(rec, line, cycle);

    auto match = eq(core).demand_lookup(line);
    trace({FlowStep::eq_lookup, core, line, match ? match->reward : 0.0, match.has_value()});

    const bool l2_miss = r.serviced == Level::LLC || r.serviced == Level::DRAM;
    const bool trigger =
        l2_miss || (cfg_.trigger == TriggerMode::miss_or_prefetch_hit && r.was_prefetch_covered);
    if (!trigger) return {};

    AccessContext ctx{agent.history, agent.last_hit, core, port.lines_per_page()};
    StateVector state = extract_state(ctx);
    trace({FlowStep::extract_state, core, line, 0.0, false});

    auto& qv = store(core);
    PrefetchAction action = select_action(qv, cfg_.actions, state, cfg_.learn, agent.rng);
    trace({FlowStep::qv_lookup, core, line, static_cast<double>(action.delta_lines), false});

    EQEntry entry;
    entry.state = state;
    entry.action = action;
    entry.core_id = core;
    entry.insert_cycle = cycle;

    std::vector<std::uint64_t> issued;
    const std::uint64_t target = line + static_cast<std::uint64_t>(static_cast<std::int64_t>(action.delta_lines));
    const std::uint64_t lpp = port.lines_per_page();
    const bool in_page = action.delta_lines != 0 && target / lpp == line / lpp;
    if (!in_page) {
      entry.reward = cfg_.rewards.no_prefetch(port.pressure(cycle));
    } else {
      port.note_candidate(core);
      entry.pf_line = target;
      if (auto d = screen(target, core, cycle, port)) {
        port.note_suppressed(core, d->reason);
        entry.filled = d->reason == SuppressReason::in_cache;
      } else {
        auto status = port.issue(core, target, cycle);
        trace({FlowStep::issue, core, target, 0.0, status == PrefetchStatus::issued});
        entry.filled = status == PrefetchStatus::duplicate_in_cache;
        after_issue(rec.pc, target, core, cycle, status);
        issued.push_back(target);
      }
    }

    {
      std::lock_guard lk(last_mu_);
      agent.last = Successor{state, action.action_id};
    }
    auto evicted = eq(core).insert(std::move(entry));
    ++inserts_;
    trace({FlowStep::eq_insert, core, in_page ? target : line, 0.0, evicted.has_value()});
    if (evicted) {
      auto t = eq_evict_to_update(*evicted, last_of(evicted->core_id));
      trace({FlowStep::eviction_update, evicted->core_id, evicted->pf_line.value_or(0), t.reward, false});
      submit(std::move(t));
    }
    return issued;
  }

 protected:
  void count_update() { ++updates_; }

 private:
  FlowTracer tracer_;
  mutable std::mutex last_mu_;
  std::atomic<std::uint64_t> inserts_{0};
  std::atomic<std::uint64_t> updates_{0};
};

// One private QVStore and EQ per core.
class PythiaPerCore final : public RlPrefetcherBase {
 public:
  PythiaPerCore(const RlConfig& cfg, unsigned n_cores, Regime eq_regime = Regime::exclusive)
      : RlPrefetcherBase(cfg, n_cores) {
    for (unsigned c = 0; c < n_cores; ++c) {
      stores_.emplace_back(cfg.geometry, Regime::exclusive, cfg.quantized);
      eqs_.emplace_back(cfg.eq_capacity, cfg.rewards, eq_regime);
    }
  }

  PrefetcherKind kind() const override { return PrefetcherKind::pythia_percore; }
  QVStore& store(unsigned core) override { return stores_[core]; }
  EvaluationQueue& eq(unsigned core) override { return eqs_[core]; }

 protected:
  void submit(SarsaTuple t) override {
    count_update();
    apply(stores_[t.core_id], t, cfg_.learn);
  }

 private:
  std::vector<QVStore> stores_;
  std::vector<EvaluationQueue> eqs_;
};

// All cores learn through one SharedRepository; candidates pass the
// redundancy filter before reaching memory.
class PythiaCrl final : public RlPrefetcherBase {
 public:
  PythiaCrl(const RlConfig& cfg, const CoordConfig& coord, unsigned n_cores)
      : RlPrefetcherBase(cfg, n_cores),
        repo_(std::make_unique<SharedRepository>(cfg.geometry, cfg.quantized, cfg.eq_capacity, cfg.rewards, coord,
                                                 cfg.learn)) {}

  PrefetcherKind kind() const override { return PrefetcherKind::pythia_crl; }
  QVStore& store(unsigned) override { return repo_->qvstore(); }
  EvaluationQueue& eq(unsigned) override { return repo_->eq(); }
  SharedRepository& repository() { return *repo_; }

 protected:
  void on_l1_miss(const TraceRecord& rec, std::uint64_t line, std::uint64_t cycle) override {
    if (repo_->coord().enabled) repo_->gst_record(rec.pc, line, rec.core_id, cycle);
  }

  std::optional<FilterDecision> screen(std::uint64_t line, unsigned core, std::uint64_t cycle,
                                       PrefetchPort& port) override {
    if (!repo_->coord().filtering()) return std::nullopt;
    auto d = repo_->filter_redundant(line, core, cycle, [&](std::uint64_t l) { return port.resident(core, l); });
    if (d.issue) return std::nullopt;
    return d;
  }

  void after_issue(std::uint64_t pc, std::uint64_t line, unsigned core, std::uint64_t cycle,
                   PrefetchStatus status) override {
    if (status == PrefetchStatus::issued) repo_->note_issued(line, core, cycle);
    if (repo_->coord().enabled) repo_->gst_record(pc, line, core, cycle);
  }

  std::uint32_t fills_owed(std::uint64_t line, unsigned) override { return repo_->note_filled(line); }

  void submit(SarsaTuple t) override {
    count_update();
    repo_->enqueue_update(std::move(t));
  }
  void flush_updates() override { repo_->batch_commit(true); }
  bool owns_eq(unsigned core) const override { return core == 0; }

 private:
  std::unique_ptr<SharedRepository> repo_;
};

inline std::unique_ptr<Prefetcher> make_prefetcher(PrefetcherKind kind, const RlConfig& rl, const CoordConfig& coord,
                                                   unsigned n_cores, bool concurrent = false) {
  switch (kind) {
    case PrefetcherKind::none: return std::make_unique<NoPrefetcher>();
    case PrefetcherKind::next_line: return std::make_unique<NextLinePrefetcher>();
    case PrefetcherKind::stride: return std::make_unique<StridePrefetcher>();
    case PrefetcherKind::pythia_percore:
      return std::make_unique<PythiaPerCore>(rl, n_cores, concurrent ? Regime::shared : Regime::exclusive);
    case PrefetcherKind::pythia_crl: return std::make_unique<PythiaCrl>(rl, coord, n_cores);
  }
  throw ConfigError("prefetcher", "unknown prefetcher kind");
}

}  // namespace crlsim
