#include <gtest/gtest.h>

#include "crlsim/engine.hpp"
#include "fixtures.hpp"

using namespace crlsim;

namespace {

// Minimal port over a hierarchy for driving prefetchers by hand.
struct HandPort final : PrefetchPort {
  MemoryHierarchy h{HierarchyConfig{}, 2};
  std::vector<std::uint64_t> issued;
  std::uint64_t candidates = 0;
  std::vector<SuppressReason> suppressed;
  PrefetchStatus issue(unsigned core, std::uint64_t line, std::uint64_t cycle) override {
    issued.push_back(line);
    return h.prefetch_fill(core, line * 64, Level::LLC, cycle).status;
  }
  bool resident(unsigned core, std::uint64_t line) const override { return h.resident(core, line, Level::LLC); }
  double pressure(std::uint64_t cycle) const override { return h.dram_occupancy(cycle); }
  std::uint64_t lines_per_page() const override { return 64; }
  void note_candidate(unsigned) override { ++candidates; }
  void note_suppressed(unsigned, SuppressReason r) override { suppressed.push_back(r); }
};

DemandResult miss() { return {Level::DRAM, 240, false, false}; }
DemandResult hit() { return {Level::L1, 4, false, false}; }
TraceRecord rec(std::uint64_t pc, std::uint64_t line, unsigned core = 0) { return {pc, line * 64, core, false, 0}; }

}  // namespace

TEST(FlowTranscript, SixEventFixtureMatchesHandDerivation) {
  auto got = fixture::flow_transcript();
  auto want = fixture::flow_expected();
  std::size_t n = std::min(got.size(), want.size());
  for (std::size_t i = 0; i < n; ++i)
    EXPECT_TRUE(fixture::same(got[i], want[i])) << "position " << i << ": got " << fixture::describe(got[i]);
  EXPECT_EQ(got.size(), want.size());
}

TEST(NextLine, IssuesOnL1MissOnly) {
  HandPort port;
  NextLinePrefetcher p;
  EXPECT_EQ(p.on_demand_access(rec(1, 10), 10, miss(), 0, port), std::vector<std::uint64_t>{11});
  EXPECT_TRUE(p.on_demand_access(rec(1, 10), 10, hit(), 1, port).empty());
  EXPECT_EQ(port.candidates, 1u);
}

TEST(Stride, FiresAfterStrideRepeats) {
  HandPort port;
  StridePrefetcher p;
  EXPECT_TRUE(p.on_demand_access(rec(7, 100), 100, miss(), 0, port).empty());
  EXPECT_TRUE(p.on_demand_access(rec(7, 103), 103, miss(), 1, port).empty());
  EXPECT_EQ(p.on_demand_access(rec(7, 106), 106, miss(), 2, port), std::vector<std::uint64_t>{109});
  // another PC trains separately
  EXPECT_TRUE(p.on_demand_access(rec(8, 106), 106, miss(), 3, port).empty());
  // a broken stride resets confidence
  EXPECT_TRUE(p.on_demand_access(rec(7, 200), 200, miss(), 4, port).empty());
  EXPECT_TRUE(p.on_demand_access(rec(7, 201), 201, miss(), 5, port).empty());
  EXPECT_EQ(p.on_demand_access(rec(7, 202), 202, miss(), 6, port), std::vector<std::uint64_t>{203});
}

TEST(Stride, NegativeStride) {
  HandPort port;
  StridePrefetcher p;
  p.on_demand_access(rec(7, 50), 50, miss(), 0, port);
  p.on_demand_access(rec(7, 48), 48, miss(), 1, port);
  EXPECT_EQ(p.on_demand_access(rec(7, 46), 46, miss(), 2, port), std::vector<std::uint64_t>{44});
}

TEST(PythiaPerCore, OffPageActionYieldsNoPrefetchEntry) {
  RlConfig cfg;
  cfg.learn.epsilon = 0.0;
  cfg.actions = ActionTable(std::vector<int>{0, 32});
  cfg.geometry.action_dim = 2;
  PythiaPerCore p(cfg, 1);
  p.store(0).fill(0.0);
  auto& g = p.store(0).geometry();
  for (unsigned v = 0; v < g.n_vaults; ++v)
    for (unsigned pl = 0; pl < g.planes_per_vault; ++pl)
      for (unsigned f = 0; f < g.feature_dim; ++f) p.store(0).set_cell(v, pl, f, 1, 1.0);
  HandPort port;
  // line 40 + 32 crosses the 64-line page
  EXPECT_TRUE(p.on_demand_access(rec(1, 40), 40, miss(), 0, port).empty());
  auto eq = p.eq(0).entries();
  ASSERT_EQ(eq.size(), 1u);
  EXPECT_FALSE(eq[0].pf_line);
  EXPECT_EQ(eq[0].reward, -2.0);
  EXPECT_EQ(port.candidates, 0u);
  // in-page: 10 + 32 = 42
  EXPECT_EQ(p.on_demand_access(rec(1, 10), 10, miss(), 1, port), std::vector<std::uint64_t>{42});
}

TEST(PythiaPerCore, TriggerModes) {
  RlConfig cfg;
  cfg.learn.epsilon = 1.0;
  cfg.trigger = TriggerMode::miss_only;
  PythiaPerCore p(cfg, 1);
  HandPort port;
  DemandResult covered_l2{Level::L2, 14, true, false};
  p.on_demand_access(rec(1, 5), 5, covered_l2, 0, port);
  EXPECT_EQ(p.inserts(), 0u);
  cfg.trigger = TriggerMode::miss_or_prefetch_hit;
  PythiaPerCore q(cfg, 1);
  q.on_demand_access(rec(1, 5), 5, covered_l2, 0, port);
  EXPECT_EQ(q.inserts(), 1u);
  q.on_demand_access(rec(1, 6), 6, DemandResult{Level::L2, 14, false, false}, 1, port);
  EXPECT_EQ(q.inserts(), 1u);
}

TEST(PythiaPerCore, EveryInsertIsEventuallyOneUpdate) {
  SimConfig cfg;
  cfg.prefetcher = PrefetcherKind::pythia_percore;
  cfg.n_cores = 2;
  cfg.warmup_events = 500;
  cfg.sim_events = 3000;
  SyntheticSpec s;
  s.kind = SyntheticKind::stride;
  s.length = 3500;
  auto r = run(cfg, generate(s, 2));
  EXPECT_GT(r.eq_inserts, 0u);
  EXPECT_EQ(r.eq_inserts, r.sarsa_updates);
}

TEST(PythiaCrl, FilterSuppressesCrossCoreDuplicates) {
  RlConfig cfg;
  cfg.learn.epsilon = 0.0;
  CoordConfig coord;
  PythiaCrl p(cfg, coord, 2);
  auto& g = p.store(0).geometry();
  for (unsigned v = 0; v < g.n_vaults; ++v)
    for (unsigned pl = 0; pl < g.planes_per_vault; ++pl)
      for (unsigned f = 0; f < g.feature_dim; ++f) p.store(0).set_cell(v, pl, f, 1, 1.0);
  HandPort port;
  EXPECT_EQ(p.on_demand_access(rec(1, 10, 0), 10, miss(), 0, port), std::vector<std::uint64_t>{11});
  EXPECT_TRUE(p.on_demand_access(rec(1, 10, 1), 10, miss(), 5, port).empty());
  ASSERT_EQ(port.suppressed.size(), 1u);
  EXPECT_EQ(port.suppressed[0], SuppressReason::in_flight);
  EXPECT_EQ(port.issued.size(), 1u);
  // both EQ entries get marked when the single fill completes
  for (auto& f : port.h.drain())
    for (auto c : f.requesters) p.on_fill(f.line, c, f.cycle);
  auto entries = p.eq(0).entries();
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_TRUE(entries[0].filled);
  EXPECT_TRUE(entries[1].filled);
  EXPECT_EQ(&p.store(0), &p.store(1));
  EXPECT_EQ(&p.eq(0), &p.eq(1));
}

TEST(PythiaCrl, FilterOffIssuesDuplicates) {
  RlConfig cfg;
  cfg.learn.epsilon = 0.0;
  CoordConfig coord;
  coord.filter = false;
  PythiaCrl p(cfg, coord, 2);
  auto& g = p.store(0).geometry();
  for (unsigned v = 0; v < g.n_vaults; ++v)
    for (unsigned pl = 0; pl < g.planes_per_vault; ++pl)
      for (unsigned f = 0; f < g.feature_dim; ++f) p.store(0).set_cell(v, pl, f, 1, 1.0);
  HandPort port;
  p.on_demand_access(rec(1, 10, 0), 10, miss(), 0, port);
  p.on_demand_access(rec(1, 10, 1), 10, miss(), 5, port);
  EXPECT_EQ(port.issued.size(), 2u);
  EXPECT_TRUE(port.suppressed.empty());
}

TEST(PythiaCrl, FinishDrainsSharedQueueOnce) {
  RlConfig cfg;
  cfg.learn.epsilon = 1.0;
  cfg.eq_capacity = 64;
  CoordConfig coord;
  coord.batch_size = 1000;
  PythiaCrl p(cfg, coord, 3);
  HandPort port;
  for (unsigned i = 0; i < 30; ++i) p.on_demand_access(rec(1, 100 + i, i % 2), 100 + i, miss(), i, port);
  p.finish();
  EXPECT_EQ(p.updates_emitted(), p.inserts());
  EXPECT_EQ(p.repository().updates_applied(), p.inserts());
  EXPECT_EQ(p.eq(0).size(), 0u);
}

TEST(Factory, BuildsEveryKind) {
  for (auto k : {PrefetcherKind::none, PrefetcherKind::next_line, PrefetcherKind::stride,
                 PrefetcherKind::pythia_percore, PrefetcherKind::pythia_crl}) {
    auto p = make_prefetcher(k, RlConfig{}, CoordConfig{}, 2);
    EXPECT_EQ(p->kind(), k);
    EXPECT_EQ(parse_prefetcher_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_prefetcher_kind("bingo"), ConfigError);
}
