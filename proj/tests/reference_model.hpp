#pragma once

// Deliberately naive re-implementations used as oracles. Nothing here calls
// into the simulator except for plain data types and the trace generator.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <list>
#include <map>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

#include "crlsim/engine.hpp"
#include "crlsim/memhier.hpp"
#include "crlsim/rl.hpp"
#include "crlsim/trace.hpp"

namespace ref {

// One explicit recency list per set, most recent at the front.
class RecencyCache {
 public:
  RecencyCache(std::uint64_t sets, std::uint64_t ways) : sets_(sets), ways_(ways), lists_(sets) {}

  bool contains(std::uint64_t line) const {
    const auto& l = lists_[line % sets_];
    return std::find(l.begin(), l.end(), line) != l.end();
  }

  // Returns true on hit. A miss inserts the line, dropping the least recent.
  bool access(std::uint64_t line) {
    auto& l = lists_[line % sets_];
    auto it = std::find(l.begin(), l.end(), line);
    if (it != l.end()) {
      l.erase(it);
      l.push_front(line);
      return true;
    }
    insert(line);
    return false;
  }

  void touch(std::uint64_t line) {
    auto& l = lists_[line % sets_];
    l.remove(line);
    l.push_front(line);
  }

  std::optional<std::uint64_t> insert(std::uint64_t line) {
    auto& l = lists_[line % sets_];
    std::optional<std::uint64_t> victim;
    if (l.size() == ways_) {
      victim = l.back();
      l.pop_back();
    }
    l.push_front(line);
    return victim;
  }

 private:
  std::uint64_t sets_, ways_;
  std::vector<std::list<std::uint64_t>> lists_;
};

struct CoreResult {
  std::uint64_t cycles = 0;
  std::uint64_t llc_misses = 0;
  std::uint64_t l1_misses = 0;
  std::uint64_t covered = 0;
  std::uint64_t prefetch_fills = 0;
};

// Multicore in-order timing without any prefetcher, or with a next-line
// prefetcher into the LLC when next_line is set (single-core use only).
// Scheduling: cores take one record each in id order (round_robin), or the
// core with the smallest clock runs next, lowest id on ties (min_clock).
struct NaiveSystem {
  crlsim::HierarchyConfig cfg;
  unsigned n = 1;
  bool next_line = false;
  crlsim::Schedule schedule = crlsim::Schedule::round_robin;

  struct Line {
    std::uint64_t ready = 0;
    bool prefetched = false;
    bool counted = false;
  };
  struct Pending {
    std::uint64_t line, complete, seq;
    bool counted;
    bool merged = false;
  };

  std::vector<CoreResult> run(const std::vector<crlsim::CoreTrace>& traces, std::uint64_t warmup,
                              std::uint64_t events) {
    auto sets = [](const crlsim::CacheConfig& c) { return c.size_bytes / (c.line_bytes * c.associativity); };
    std::vector<RecencyCache> l1, l2;
    std::vector<std::map<std::uint64_t, Line>> l1m(n), l2m(n);
    for (unsigned c = 0; c < n; ++c) {
      l1.emplace_back(sets(cfg.l1), cfg.l1.associativity);
      l2.emplace_back(sets(cfg.l2), cfg.l2.associativity);
    }
    RecencyCache llc(sets(cfg.llc), cfg.llc.associativity);
    std::map<std::uint64_t, Line> llcm;
    std::uint64_t next_free = 0;
    std::vector<Pending> pending;
    std::uint64_t seq = 0;

    auto dram = [&](std::uint64_t at) {
      std::uint64_t start = std::max(at, next_free);
      next_free = start + cfg.dram.min_gap;
      return start + cfg.dram.service_latency;
    };
    auto put = [&](RecencyCache& c, std::map<std::uint64_t, Line>& meta, std::uint64_t line, Line m) {
      if (auto v = c.insert(line)) meta.erase(*v);
      meta[line] = m;
    };

    std::vector<std::uint64_t> clock(n, 0), consumed(n, 0), start(n, 0);
    std::vector<CoreResult> out(n);
    std::vector<bool> measuring(n, false);
    const std::uint64_t total = warmup + events;
    for (std::uint64_t turn = 0;; ++turn) {
      unsigned k = n;
      if (schedule == crlsim::Schedule::round_robin) {
        if (turn < total * n) k = static_cast<unsigned>(turn % n);
      } else {
        for (unsigned c = 0; c < n; ++c)
          if (consumed[c] < total && (k == n || clock[c] < clock[k])) k = c;
      }
      if (k == n) break;
      const std::uint64_t now = clock[k];

      // complete due prefetch fills, earliest first
      std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
        return a.complete != b.complete ? a.complete < b.complete : a.seq < b.seq;
      });
      while (!pending.empty() && pending.front().complete <= now) {
        auto p = pending.front();
        pending.erase(pending.begin());
        if (p.counted) ++out[0].prefetch_fills;
        if (!p.merged && !llc.contains(p.line)) put(llc, llcm, p.line, Line{p.complete, true, p.counted});
      }

      const auto line = traces[k][consumed[k]].addr / cfg.llc.line_bytes;
      auto& r = out[k];
      std::uint64_t stall = 0;
      bool l1_hit = false;
      if (l1[k].contains(line)) {
        l1[k].touch(line);
        l1_hit = true;
      } else {
        ++r.l1_misses;
        std::uint64_t ready;
        if (l2[k].contains(line)) {
          l2[k].touch(line);
          ready = std::max(now + cfg.l2.latency_cycles, l2m[k][line].ready);
        } else if (llc.contains(line)) {
          llc.touch(line);
          auto& m = llcm[line];
          if (m.prefetched) {
            m.prefetched = false;
            if (m.counted && measuring[k]) ++r.covered;
          }
          ready = std::max(now + cfg.llc.latency_cycles, m.ready);
          put(l2[k], l2m[k], line, Line{ready});
        } else {
          ++r.llc_misses;
          auto it = std::find_if(pending.begin(), pending.end(), [&](const Pending& p) { return p.line == line; });
          if (it != pending.end()) {
            it->merged = true;
            if (it->counted && measuring[k]) ++r.covered;
            ready = std::max(now + cfg.llc.latency_cycles, it->complete);
          } else {
            ready = dram(now + cfg.llc.latency_cycles);
          }
          put(llc, llcm, line, Line{ready});
          put(l2[k], l2m[k], line, Line{ready});
        }
        put(l1[k], l1m[k], line, Line{ready});
        stall = ready - now;

        if (next_line) {
          const auto target = line + 1;
          bool busy = std::any_of(pending.begin(), pending.end(), [&](const Pending& p) { return p.line == target; });
          if (!llc.contains(target) && !busy) pending.push_back(Pending{target, dram(now), seq++, measuring[k]});
        }
      }
      clock[k] += 1 + (l1_hit ? 0 : stall);
      if (++consumed[k] == warmup) {
        out[k] = CoreResult{};
        measuring[k] = true;
        start[k] = clock[k];
      }
    }
    // fills still in flight when the last core finishes complete during the drain
    for (const auto& p : pending)
      if (p.counted) ++out[0].prefetch_fills;
    for (unsigned c = 0; c < n; ++c) out[c].cycles = clock[c] - start[c];
    return out;
  }
};

// Over requests (line, cycle) in issue order: how many name a line that was
// already requested (by any core) fewer than `window` cycles earlier.
template <class Log>
std::uint64_t count_duplicates(const Log& log, std::uint64_t window) {
  std::map<std::uint64_t, std::uint64_t> last;
  std::uint64_t dups = 0;
  for (const auto& e : log) {
    auto it = last.find(e.line);
    if (it != last.end() && e.cycle - it->second < window) ++dups;
    last[e.line] = e.cycle;
  }
  return dups;
}

// Tabular SARSA written out cell by cell. Q(s, a) is the sum of one cell per
// plane; an update moves each contributing cell by an equal share of the
// TD step.
struct SarsaOracle {
  crlsim::QVGeometry g;
  double alpha, gamma;
  std::map<std::tuple<unsigned, unsigned, unsigned, unsigned>, double> cells;

  double cell(unsigned v, unsigned p, unsigned f, unsigned a) const {
    auto it = cells.find({v, p, f, a});
    return it == cells.end() ? 0.0 : it->second;
  }

  double q(const crlsim::StateVector& s, unsigned a) const {
    auto idx = crlsim::plane_indices(s, g);
    double sum = 0.0;
    for (unsigned v = 0, k = 0; v < g.n_vaults; ++v)
      for (unsigned p = 0; p < g.planes_per_vault; ++p, ++k) sum += cell(v, p, idx[k], a);
    return sum;
  }

  void update(const crlsim::StateVector& s, unsigned a, double r, const crlsim::StateVector* s2, unsigned a2) {
    double old_q = q(s, a);
    double next_q = s2 ? q(*s2, a2) : 0.0;
    double share = alpha * (r + gamma * next_q - old_q) / (g.n_vaults * g.planes_per_vault);
    auto idx = crlsim::plane_indices(s, g);
    for (unsigned v = 0, k = 0; v < g.n_vaults; ++v)
      for (unsigned p = 0; p < g.planes_per_vault; ++p, ++k) cells[{v, p, idx[k], a}] += share;
  }
};

// A random state drawn from a small pool so that updates collide on cells.
inline crlsim::StateVector random_state(std::mt19937_64& rng) {
  crlsim::StateVector s;
  s.pc_sig = rng() % 12;
  s.delta_sig = static_cast<std::int64_t>(rng() % 9) - 4;
  s.stride_sig = static_cast<int>(rng() % 4);
  s.hitmiss_sig = static_cast<int>(rng() % 2);
  s.reuse_sig = static_cast<int>(rng() % 8);
  s.core_id = static_cast<unsigned>(rng() % 4);
  return s;
}

}  // namespace ref
