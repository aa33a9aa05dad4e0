#include <gtest/gtest.h>

#include <map>
#include <random>
#include <thread>

#include "crlsim/eval_queue.hpp"
#include "fixtures.hpp"

using namespace crlsim;

TEST(EqTape, DemandRewardsMatchHandDerivation) {
  auto got = fixture::replay_eq_tape(fixture::eq_tape());
  EXPECT_EQ(got.demands, fixture::eq_expected_demands());
}

TEST(EqTape, EvictionUpdatesMatchHandDerivation) {
  auto got = fixture::replay_eq_tape(fixture::eq_tape());
  auto want = fixture::eq_expected_updates();
  ASSERT_EQ(got.updates.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(got.updates[i].tag, want[i].tag) << i;
    EXPECT_DOUBLE_EQ(got.updates[i].reward, want[i].reward) << want[i].tag;
    EXPECT_EQ(got.updates[i].successor, want[i].successor) << want[i].tag;
  }
}

TEST(EqTape, FillMarksOnlyUnfilledEntries) {
  auto got = fixture::replay_eq_tape(fixture::eq_tape());
  // F10 F11 F13 F14 F14 F16 F18 F99 F18 F20 F20 F22
  std::vector<std::size_t> want{1, 1, 1, 1, 1, 1, 1, 0, 1, 1, 1, 1};
  EXPECT_EQ(got.marks, want);
}

namespace {

// Independent list model of the queue.
struct Shadow {
  struct E {
    std::uint64_t id;
    std::optional<std::uint64_t> line;
    bool filled = false;
    std::optional<double> reward;
  };
  std::size_t cap;
  RewardScheme rw;
  std::vector<E> q;

  std::optional<E> insert(E e) {
    q.push_back(e);
    if (q.size() <= cap) return std::nullopt;
    E out = q.front();
    q.erase(q.begin());
    if (!out.reward) out.reward = rw.r_in;
    return out;
  }
  std::optional<double> demand(std::uint64_t line) {
    for (auto& e : q)
      if (e.line == line && !e.reward) return e.reward = e.filled ? rw.r_at : rw.r_al;
    return std::nullopt;
  }
  std::size_t fill(std::uint64_t line) {
    for (auto& e : q)
      if (e.line == line && !e.filled) return e.filled = true;
    return 0;
  }
};

}  // namespace

TEST(EqProperties, RandomOperationSequences) {
  std::mt19937_64 rng(31337);
  RewardScheme rw;
  std::uint64_t total_updates = 0, total_inserts = 0, rat = 0, ral = 0;
  for (int seq = 0; seq < 100000; ++seq) {
    const std::size_t cap = 1 + rng() % 6;
    EvaluationQueue eq(cap, rw);
    Shadow shadow{cap, rw, {}};
    std::map<std::uint64_t, double> first_reward;  // id -> first reward ever observed
    std::map<std::uint64_t, int> updates;
    std::uint64_t next_id = 0, last_evicted = 0;
    bool any_evicted = false;
    auto on_evict = [&](const EQEntry& e, const Shadow::E& s) {
      ASSERT_EQ(e.id, s.id);
      ASSERT_TRUE(e.reward.has_value());
      ASSERT_DOUBLE_EQ(*e.reward, *s.reward);
      if (any_evicted) {
        ASSERT_GT(e.id, last_evicted);  // FIFO
      }
      last_evicted = e.id;
      any_evicted = true;
      if (auto it = first_reward.find(e.id); it != first_reward.end()) {
        ASSERT_DOUBLE_EQ(*e.reward, it->second);
      }
      ++updates[e.id];
      ++total_updates;
    };
    const int ops = 5 + static_cast<int>(rng() % 40);
    for (int i = 0; i < ops; ++i) {
      const std::uint64_t line = rng() % 5;
      switch (rng() % 3) {
        case 0: {
          EQEntry e;
          e.core_id = rng() % 4;
          bool np = rng() % 5 == 0;
          if (!np) e.pf_line = line;
          if (np) e.reward = rw.no_prefetch((rng() % 100) / 100.0);
          e.filled = !np && rng() % 6 == 0;  // prefetch found the line resident
          Shadow::E s{next_id++, e.pf_line, e.filled, e.reward};
          if (s.reward) first_reward[s.id] = *s.reward;
          ++total_inserts;
          auto ev = eq.insert(e);
          auto sev = shadow.insert(s);
          ASSERT_EQ(ev.has_value(), sev.has_value());
          if (ev) on_evict(*ev, *sev);
          ASSERT_LE(eq.size(), cap);
          break;
        }
        case 1: {
          // the reward branch is decided by the filled bit at lookup time
          bool filled_before = false;
          for (const auto& s : shadow.q)
            if (s.line == line && !s.reward) {
              filled_before = s.filled;
              break;
            }
          auto m = eq.demand_lookup(line);
          auto sm = shadow.demand(line);
          ASSERT_EQ(m.has_value(), sm.has_value());
          if (m) {
            ASSERT_DOUBLE_EQ(m->reward, filled_before ? rw.r_at : rw.r_al);
            ASSERT_DOUBLE_EQ(m->reward, *sm);
            (filled_before ? rat : ral)++;
            ASSERT_TRUE(first_reward.emplace(m->entry_id, m->reward).second);  // assigned once
          }
          break;
        }
        default:
          ASSERT_EQ(eq.mark_filled(line), shadow.fill(line));
      }
    }
    auto rest = eq.drain();
    ASSERT_EQ(rest.size(), shadow.q.size());
    for (std::size_t i = 0; i < rest.size(); ++i) {
      Shadow::E s = shadow.q[i];
      if (!s.reward) s.reward = rw.r_in;
      on_evict(rest[i], s);
    }
    ASSERT_EQ(updates.size(), next_id);  // every entry updated ...
    for (const auto& [id, n] : updates) ASSERT_EQ(n, 1) << "entry " << id;  // ... exactly once
    ASSERT_EQ(eq.size(), 0u);
  }
  EXPECT_EQ(total_updates, total_inserts);
  EXPECT_GT(rat, 0u);
  EXPECT_GT(ral, 0u);
}

TEST(EqDefaults, RewardScheme) {
  RewardScheme r;
  EXPECT_EQ(r.r_at, 20);
  EXPECT_EQ(r.r_al, 12);
  EXPECT_EQ(r.r_in, -14);
  EXPECT_EQ(r.no_prefetch(0.74), -2);
  EXPECT_EQ(r.no_prefetch(0.75), -4);
  r.r_in = 1;
  EXPECT_THROW(r.validate(), ConfigError);
  EXPECT_THROW(EvaluationQueue(0), ConfigError);
}

TEST(EqDefaults, NoPrefetchEntryIsNeverFilledOrMatched) {
  EvaluationQueue eq(2);
  EQEntry e;
  e.filled = true;
  e.reward = -2;
  eq.insert(e);
  EXPECT_FALSE(eq.entries()[0].filled);
  EXPECT_EQ(eq.mark_filled(0), 0u);
  EXPECT_FALSE(eq.demand_lookup(0));
}

TEST(EqEvict, UpdateCarriesSuccessorAndRequiresReward) {
  EQEntry e;
  e.state.pc_sig = 4;
  e.action = {3, 2};
  e.reward = 12;
  e.core_id = 1;
  Successor s{StateVector{.pc_sig = 9}, 5};
  auto t = eq_evict_to_update(e, s);
  EXPECT_EQ(t.state.pc_sig, 4u);
  EXPECT_EQ(t.action, 3u);
  EXPECT_EQ(t.next->action, 5u);
  EXPECT_EQ(t.core_id, 1u);
  e.reward.reset();
  EXPECT_THROW(eq_evict_to_update(e, s), Error);
}

TEST(EqShared, ConcurrentOperationsKeepAccounting) {
  EvaluationQueue eq(64, {}, Regime::shared);
  std::atomic<std::uint64_t> evicted{0};
  std::vector<std::thread> ts;
  for (unsigned t = 0; t < 4; ++t)
    ts.emplace_back([&, t] {
      std::mt19937_64 rng(t);
      for (int i = 0; i < 5000; ++i) {
        EQEntry e;
        e.core_id = t;
        e.pf_line = rng() % 50;
        if (eq.insert(e)) ++evicted;
        eq.demand_lookup(rng() % 50);
        eq.mark_filled(rng() % 50);
      }
    });
  for (auto& t : ts) t.join();
  evicted += eq.drain().size();
  EXPECT_EQ(evicted.load(), 20000u);
}
