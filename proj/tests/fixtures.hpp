#pragma once

// Hand-derived fixtures. Each expected sequence below was written out by
// stepping the scenario by hand; the tests compare the implementation
// against these tables rather than against its own output.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crlsim/engine.hpp"
#include "crlsim/eval_queue.hpp"
#include "crlsim/prefetchers.hpp"

namespace fixture {

// ---------------------------------------------------------------------------
// Decision-flow tape: 1 core, pythia_percore, epsilon 0, EQ capacity 2,
// every Q cell of action +1 preset so +1 is always greedy. Lines, in order:
//   100 300 101 127 127 102   (warmup 1, measured 5)
// DRAM: 200 service, min_gap 10; LLC 40. Worked timing:
//   e0 @0    demand 100 DRAM done 240; pf 101 done 250; clock 241
//   e1 @241  demand 300 done 481; pf 301 starts 291 done 491; clock 482
//   e2 @482  fill 101; demand 101 LLC hit (timely); pf 102 done 682; E0 out
//   e3 @523  fill 301; demand 127 DRAM; 128 is off-page -> no-prefetch, E1 out
//   e4 @764  fill 102; demand 127 L1 hit, no flow
//   e5 @765  demand 102 LLC hit on filled line; pf 103; E2 out
//   end      fill 103; EQ drained: E3 (no-prefetch), E4 (never demanded)
// ---------------------------------------------------------------------------

struct Step {
  crlsim::FlowStep step;
  std::uint64_t line;
  double value;
  bool flag;
};

inline std::vector<crlsim::CoreTrace> flow_trace() {
  std::vector<crlsim::CoreTrace> t(1);
  std::uint64_t seq = 0;
  for (std::uint64_t line : {100, 300, 101, 127, 127, 102})
    t[0].push_back(crlsim::TraceRecord{0x400000, line * 64, 0, false, seq++});
  return t;
}

inline crlsim::SimConfig flow_config() {
  crlsim::SimConfig c;
  c.n_cores = 1;
  c.warmup_events = 1;
  c.sim_events = 5;
  c.prefetcher = crlsim::PrefetcherKind::pythia_percore;
  c.rl.learn.epsilon = 0.0;
  c.rl.eq_capacity = 2;
  c.rl.trigger = crlsim::TriggerMode::miss_only;
  return c;
}

inline std::vector<Step> flow_expected() {
  using S = crlsim::FlowStep;
  return {
      {S::eq_lookup, 100, 0, false},    {S::extract_state, 100, 0, false}, {S::qv_lookup, 100, 1, false},
      {S::issue, 101, 0, true},         {S::eq_insert, 101, 0, false},

      {S::eq_lookup, 300, 0, false},    {S::extract_state, 300, 0, false}, {S::qv_lookup, 300, 1, false},
      {S::issue, 301, 0, true},         {S::eq_insert, 301, 0, false},

      {S::fill_mark, 101, 0, true},
      {S::eq_lookup, 101, 20, true},    {S::extract_state, 101, 0, false}, {S::qv_lookup, 101, 1, false},
      {S::issue, 102, 0, true},         {S::eq_insert, 102, 0, true},      {S::eviction_update, 101, 20, false},

      {S::fill_mark, 301, 0, true},
      {S::eq_lookup, 127, 0, false},    {S::extract_state, 127, 0, false}, {S::qv_lookup, 127, 1, false},
      {S::eq_insert, 127, 0, true},     {S::eviction_update, 301, -14, false},

      {S::fill_mark, 102, 0, true},

      {S::eq_lookup, 102, 20, true},    {S::extract_state, 102, 0, false}, {S::qv_lookup, 102, 1, false},
      {S::issue, 103, 0, true},         {S::eq_insert, 103, 0, true},      {S::eviction_update, 102, 20, false},

      {S::fill_mark, 103, 0, true},
      {S::eviction_update, 0, -2, false}, {S::eviction_update, 103, -14, false},
  };
}

// Runs the tape and returns the recorded transcript.
inline std::vector<crlsim::FlowEvent> flow_transcript() {
  std::vector<crlsim::FlowEvent> got;
  crlsim::RunOptions opts;
  opts.tracer = [&](const crlsim::FlowEvent& e) { got.push_back(e); };
  crlsim::Simulator sim(flow_config(), flow_trace(), opts);
  auto& rl = dynamic_cast<crlsim::RlPrefetcherBase&>(sim.prefetcher());
  auto& q = rl.store(0);
  const auto& g = q.geometry();
  for (unsigned v = 0; v < g.n_vaults; ++v)
    for (unsigned p = 0; p < g.planes_per_vault; ++p)
      for (unsigned f = 0; f < g.feature_dim; ++f) q.set_cell(v, p, f, 1, 1.0);
  sim.run();
  return got;
}

inline bool same(const crlsim::FlowEvent& e, const Step& s) {
  return e.step == s.step && e.line == s.line && e.value == s.value && e.flag == s.flag && e.core == 0;
}

inline std::string describe(const crlsim::FlowEvent& e) {
  return "step " + std::to_string(static_cast<int>(e.step)) + " line " + std::to_string(e.line) + " value " +
         std::to_string(e.value) + " flag " + std::to_string(e.flag);
}

// ---------------------------------------------------------------------------
// EQ tape: capacity 3, default rewards, entries a..u alternate cores 0/1.
// Each op is Insert(line or none, pressure), Fill(line) or Demand(line);
// the last op drains the queue.
// ---------------------------------------------------------------------------

struct EqOp {
  enum Kind { insert, fill, demand, drain } kind;
  std::optional<std::uint64_t> line;  // insert: absent = no-prefetch
  double pressure = 0.0;
  char tag = 0;  // insert: entry label
};

struct EqUpdate {
  char tag;
  double reward;
  char successor;  // label of the same core's latest entry at eviction time
};

inline std::vector<EqOp> eq_tape() {
  using K = EqOp::Kind;
  auto I = [](char tag, std::optional<std::uint64_t> line, double pressure = 0.0) {
    return EqOp{K::insert, line, pressure, tag};
  };
  auto F = [](std::uint64_t line) { return EqOp{K::fill, line, 0, 0}; };
  auto D = [](std::uint64_t line) { return EqOp{K::demand, line, 0, 0}; };
  return {
      I('a', 10),  I('b', 11),  F(10),          D(10),       I('c', 12),  I('d', std::nullopt, 0.1),
      D(11),       F(11),       I('e', 13),     D(12),       I('f', 13),  D(13),
      F(13),       D(13),       I('g', 14),     I('h', 14),  F(14),       F(14),
      D(14),       I('i', std::nullopt, 0.9),   D(14),       D(14),       I('j', 15),  I('k', 16),
      F(16),       I('l', 17),  I('m', 18),     D(16),       D(17),       F(18),
      I('n', 19),  F(99),       D(99),          I('o', 18),  D(18),       D(18),
      F(18),       I('p', std::nullopt, 0.2),   I('q', 20),  F(20),       I('r', 20),  D(20),
      I('s', 21),  F(20),       D(20),          I('t', 22),  D(21),       I('u', std::nullopt, 0.0),
      F(22),       EqOp{K::drain, std::nullopt, 0, 0},
  };
}

// Demand outcomes in tape order: reward or absent for "no match".
inline std::vector<std::optional<double>> eq_expected_demands() {
  return {20, 12, 12, 12, 12, 20, 20, std::nullopt, 20, 12, std::nullopt, 20, 12, 20, 20, 12};
}

inline std::vector<EqUpdate> eq_expected_updates() {
  return {{'a', 20, 'c'},  {'b', 12, 'd'}, {'c', 12, 'e'},  {'d', -2, 'f'}, {'e', 12, 'g'},  {'f', 12, 'h'},
          {'g', 20, 'i'},  {'h', 20, 'j'}, {'i', -4, 'k'},  {'j', -14, 'l'}, {'k', 20, 'm'}, {'l', 12, 'n'},
          {'m', 20, 'o'},  {'n', -14, 'p'}, {'o', 12, 'q'}, {'p', -2, 'r'}, {'q', 20, 's'},  {'r', 20, 't'},
          {'s', 12, 'u'},  {'t', -14, 't'}, {'u', -2, 'u'}};
}

// Replays the tape through an EvaluationQueue. Entries carry their label in
// state.pc_sig; cores alternate starting with core 0.
struct EqReplay {
  std::vector<std::optional<double>> demands;
  std::vector<EqUpdate> updates;
  std::vector<std::size_t> marks;  // per fill op
};

inline EqReplay replay_eq_tape(const std::vector<EqOp>& tape) {
  crlsim::EvaluationQueue eq(3);
  EqReplay out;
  std::optional<char> latest[2];
  unsigned next_core = 0;
  auto emit = [&](const crlsim::EQEntry& e) {
    auto succ = latest[e.core_id];
    auto t = crlsim::eq_evict_to_update(
        e, succ ? std::optional<crlsim::Successor>(crlsim::Successor{crlsim::StateVector{.pc_sig = std::uint64_t(*succ)}, 0})
                : std::nullopt);
    out.updates.push_back({static_cast<char>(t.state.pc_sig), t.reward,
                           t.next ? static_cast<char>(t.next->state.pc_sig) : '?'});
  };
  for (const auto& op : tape) {
    switch (op.kind) {
      case EqOp::insert: {
        crlsim::EQEntry e;
        e.state.pc_sig = static_cast<std::uint64_t>(op.tag);
        e.core_id = next_core;
        e.pf_line = op.line;
        if (!op.line) e.reward = eq.rewards().no_prefetch(op.pressure);
        latest[next_core] = op.tag;
        next_core ^= 1u;
        if (auto ev = eq.insert(e)) emit(*ev);
        break;
      }
      case EqOp::fill: out.marks.push_back(eq.mark_filled(*op.line)); break;
      case EqOp::demand: {
        auto m = eq.demand_lookup(*op.line);
        out.demands.push_back(m ? std::optional<double>(m->reward) : std::nullopt);
        break;
      }
      case EqOp::drain:
        for (auto& e : eq.drain()) emit(e);
        break;
    }
  }
  return out;
}

}  // namespace fixture
