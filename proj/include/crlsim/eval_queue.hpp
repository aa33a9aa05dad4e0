#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "crlsim/error.hpp"
#include "crlsim/rl.hpp"

namespace crlsim {

// Reward magnitudes. The no-prefetch reward depends on DRAM pressure at the
// time the action is taken.
struct RewardScheme {
  double r_at = 20.0;
  double r_al = 12.0;
  double r_in = -14.0;
  double r_np_low = -2.0;
  double r_np_high = -4.0;
  double pressure_threshold = 0.75;

  double no_prefetch(double pressure) const { return pressure >= pressure_threshold ? r_np_high : r_np_low; }

  void validate() const {
    if (r_at < r_al) throw ConfigError("reward.at", "must be >= reward.al");
    if (!(r_in < 0.0)) throw ConfigError("reward.in", "must be negative");
    if (!(pressure_threshold >= 0.0 && pressure_threshold <= 1.0))
      throw ConfigError("reward.pressure_threshold", "must lie in [0, 1]");
  }
};

struct EQEntry {
  StateVector state{};
  PrefetchAction action{};
  std::optional<std::uint64_t> pf_line;  // absent for no-prefetch and out-of-page actions
  bool filled = false;
  unsigned core_id = 0;
  std::optional<double> reward;
  std::uint64_t insert_cycle = 0;
  std::uint64_t id = 0;  // assigned by the queue, increasing in insertion order
};

struct DemandMatch {
  std::uint64_t entry_id = 0;
  unsigned core_id = 0;
  double reward = 0.0;
};

// FIFO of recently taken actions with a line-granular side index. A demand
// rewards the oldest unrewarded entry for its line; a fill marks the oldest
// unfilled one. Rewarded entries keep their slot until FIFO eviction.
// In the shared regime each operation is atomic as a whole.
class EvaluationQueue {
 public:
  EvaluationQueue(std::size_t capacity, RewardScheme rewards = {}, Regime regime = Regime::exclusive)
      : capacity_(capacity), rewards_(rewards), regime_(regime), mu_(std::make_unique<std::mutex>()) {
    if (capacity_ == 0) throw ConfigError("eq.capacity", "must be > 0");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const {
    auto lk = lock();
    return fifo_.size();
  }
  const RewardScheme& rewards() const { return rewards_; }

  // Returns the evicted oldest entry when the queue overflows. An evicted
  // entry that never earned a reward leaves with r_in.
  std::optional<EQEntry> insert(EQEntry e) {
    auto lk = lock();
    e.id = next_id_++;
    if (e.filled && !e.pf_line) e.filled = false;
    if (e.pf_line) by_line_[*e.pf_line].push_back(e.id);
    fifo_.push_back(std::move(e));
    if (fifo_.size() <= capacity_) return std::nullopt;
    return pop_front_locked();
  }

  std::optional<DemandMatch> demand_lookup(std::uint64_t line) {
    auto lk = lock();
    auto it = by_line_.find(line);
    if (it == by_line_.end()) return std::nullopt;
    for (auto id : it->second) {
      auto& e = at(id);
      if (e.reward) continue;
      e.reward = e.filled ? rewards_.r_at : rewards_.r_al;
      return DemandMatch{e.id, e.core_id, *e.reward};
    }
    return std::nullopt;
  }

  std::size_t mark_filled(std::uint64_t line) {
    auto lk = lock();
    auto it = by_line_.find(line);
    if (it == by_line_.end()) return 0;
    for (auto id : it->second) {
      auto& e = at(id);
      if (!e.filled) {
        e.filled = true;
        return 1;
      }
    }
    return 0;
  }

  // Empties the queue oldest first, applying the eviction default.
  std::vector<EQEntry> drain() {
    auto lk = lock();
    std::vector<EQEntry> out;
    out.reserve(fifo_.size());
    while (!fifo_.empty()) out.push_back(pop_front_locked());
    return out;
  }

  std::vector<EQEntry> entries() const {
    auto lk = lock();
    return {fifo_.begin(), fifo_.end()};
  }

 private:
  std::unique_lock<std::mutex> lock() const {
    if (regime_ == Regime::shared) return std::unique_lock<std::mutex>(*mu_);
    return {};
  }

  EQEntry& at(std::uint64_t id) { return fifo_[id - fifo_.front().id]; }

  EQEntry pop_front_locked() {
    EQEntry e = std::move(fifo_.front());
    fifo_.pop_front();
    if (e.pf_line) {
      auto it = by_line_.find(*e.pf_line);
      it->second.pop_front();  // the oldest entry overall is the oldest for its line
      if (it->second.empty()) by_line_.erase(it);
    }
    if (!e.reward) e.reward = rewards_.r_in;
    return e;
  }

  std::size_t capacity_;
  RewardScheme rewards_;
  Regime regime_;
  std::deque<EQEntry> fifo_;
  std::unordered_map<std::uint64_t, std::deque<std::uint64_t>> by_line_;
  std::uint64_t next_id_ = 0;
  std::unique_ptr<std::mutex> mu_;
};

// Arguments for one SARSA update produced by an EQ eviction.
struct SarsaTuple {
  StateVector state{};
  unsigned action = 0;
  double reward = 0.0;
  std::optional<Successor> next;  // most recent (s, a) taken by the same core
  unsigned core_id = 0;
};

inline SarsaTuple eq_evict_to_update(const EQEntry& evicted, const std::optional<Successor>& latest_of_core) {
  if (!evicted.reward) throw Error("evicted EQ entry carries no reward");
  return SarsaTuple{evicted.state, evicted.action.action_id, *evicted.reward, latest_of_core, evicted.core_id};
}

inline double apply(QVStore& store, const SarsaTuple& t, const LearnParams& params) {
  return sarsa_update(store, t.state, t.action, t.reward, t.next, params);
}

}  // namespace crlsim
