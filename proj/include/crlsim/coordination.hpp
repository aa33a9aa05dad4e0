#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crlsim/error.hpp"
#include "crlsim/eval_queue.hpp"
#include "crlsim/rl.hpp"

namespace crlsim {

struct GstEntry {
  std::uint64_t pc = 0;
  std::uint64_t line = 0;
  unsigned core_id = 0;
  std::uint64_t timestamp_cycle = 0;
  friend bool operator==(const GstEntry&, const GstEntry&) = default;
};

// Ring of recent accesses and prefetches from every core. Keeps a per-line
// summary of the newest live record so window queries are O(1).
class GlobalStateTable {
 public:
  explicit GlobalStateTable(std::size_t capacity = 1024) : ring_(capacity) {
    if (capacity == 0) throw ConfigError("coord.gst_capacity", "must be > 0");
  }

  void record(std::uint64_t pc, std::uint64_t line, unsigned core, std::uint64_t cycle) {
    if (size_ == ring_.size()) {
      const auto& old = ring_[head_];
      auto it = index_.find(old.line);
      if (--it->second.live == 0) index_.erase(it);
    } else {
      ++size_;
    }
    ring_[head_] = GstEntry{pc, line, core, cycle};
    auto& s = index_[line];
    ++s.live;
    s.newest = ring_[head_];
    head_ = (head_ + 1) % ring_.size();
  }

  std::optional<GstEntry> latest(std::uint64_t line) const {
    auto it = index_.find(line);
    if (it == index_.end()) return std::nullopt;
    return it->second.newest;
  }

  std::vector<GstEntry> find_all(std::uint64_t line) const {
    std::vector<GstEntry> out;
    for (const auto& e : entries())
      if (e.line == line) out.push_back(e);
    return out;
  }

  // Oldest first.
  std::vector<GstEntry> entries() const {
    std::vector<GstEntry> out;
    out.reserve(size_);
    std::size_t start = (head_ + ring_.size() - size_) % ring_.size();
    for (std::size_t i = 0; i < size_; ++i) out.push_back(ring_[(start + i) % ring_.size()]);
    return out;
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return ring_.size(); }

 private:
  struct Summary {
    std::uint32_t live = 0;
    GstEntry newest;
  };
  std::vector<GstEntry> ring_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::unordered_map<std::uint64_t, Summary> index_;
};

enum class SuppressReason : std::uint8_t { none, in_cache, in_flight, cross_core_window };

inline std::string_view to_string(SuppressReason r) {
  switch (r) {
    case SuppressReason::none: return "none";
    case SuppressReason::in_cache: return "in_cache";
    case SuppressReason::in_flight: return "in_flight";
    case SuppressReason::cross_core_window: return "cross_core_window";
  }
  return "?";
}

struct FilterDecision {
  bool issue = true;
  SuppressReason reason = SuppressReason::none;
};

struct CoordConfig {
  bool enabled = true;
  bool filter = true;
  std::size_t gst_capacity = 1024;
  std::uint64_t window_cycles = 500;
  std::size_t batch_size = 8;

  bool filtering() const { return enabled && filter; }

  void validate() const {
    if (gst_capacity == 0) throw ConfigError("coord.gst_capacity", "must be > 0");
    if (batch_size == 0) throw ConfigError("coord.batch_size", "must be > 0");
  }
};

// The shared learning area: one QVStore and one EQ used by every core, the
// global state table, the system-wide set of in-flight prefetch lines, and a
// buffer of SARSA updates committed in batches. Every public operation is
// atomic with respect to the others.
class SharedRepository {
 public:
  struct InFlight {
    unsigned core = 0;
    std::uint64_t issue_cycle = 0;
    std::uint32_t waiters = 0;  // suppressed duplicates whose EQ entries await this fill
  };

  SharedRepository(const QVGeometry& geom, bool quantized, std::size_t eq_capacity, const RewardScheme& rewards,
                   const CoordConfig& coord, const LearnParams& params)
      : qvstore_(geom, Regime::shared, quantized),
        eq_(eq_capacity, rewards, Regime::shared),
        gst_(coord.gst_capacity),
        coord_(coord),
        params_(params) {
    coord_.validate();
  }

  QVStore& qvstore() { return qvstore_; }
  const QVStore& qvstore() const { return qvstore_; }
  EvaluationQueue& eq() { return eq_; }
  const CoordConfig& coord() const { return coord_; }
  const LearnParams& params() const { return params_; }

  void gst_record(std::uint64_t pc, std::uint64_t line, unsigned core, std::uint64_t cycle) {
    std::lock_guard lk(mu_);
    gst_.record(pc, line, core, cycle);
  }

  GlobalStateTable gst() const {
    std::lock_guard lk(mu_);
    return gst_;
  }

  // Decides whether a candidate prefetch should reach the memory system.
  // `resident(line)` answers whether the line is already at the target level.
  template <class ResidentFn>
  FilterDecision filter_redundant(std::uint64_t line, unsigned core, std::uint64_t cycle, ResidentFn&& resident) {
    (void)core;
    std::lock_guard lk(mu_);
    FilterDecision d;
    if (resident(line)) {
      d = {false, SuppressReason::in_cache};
    } else if (auto it = inflight_.find(line); it != inflight_.end()) {
      ++it->second.waiters;
      d = {false, SuppressReason::in_flight};
    } else if (auto g = gst_.latest(line); g && cycle >= g->timestamp_cycle &&
                                              cycle - g->timestamp_cycle < coord_.window_cycles) {
      d = {false, SuppressReason::cross_core_window};
    }
    if (!d.issue) ++suppressed_[static_cast<std::size_t>(d.reason)];
    return d;
  }

  void note_issued(std::uint64_t line, unsigned core, std::uint64_t cycle) {
    std::lock_guard lk(mu_);
    inflight_.try_emplace(line, InFlight{core, cycle, 0});
  }

  // Removes the line from the in-flight set. Returns how many EQ fill marks
  // the completion owes: the issuer plus every waiter.
  std::uint32_t note_filled(std::uint64_t line) {
    std::lock_guard lk(mu_);
    auto it = inflight_.find(line);
    if (it == inflight_.end()) return 1;
    std::uint32_t n = 1 + it->second.waiters;
    inflight_.erase(it);
    return n;
  }

  bool in_flight(std::uint64_t line) const {
    std::lock_guard lk(mu_);
    return inflight_.count(line) != 0;
  }
  std::size_t in_flight_count() const {
    std::lock_guard lk(mu_);
    return inflight_.size();
  }

  // Buffers one update; commits once the buffer holds batch_size tuples.
  std::size_t enqueue_update(SarsaTuple t) {
    std::lock_guard lk(mu_);
    pending_.push_back(std::move(t));
    if (pending_.size() >= coord_.batch_size) return commit_locked();
    return 0;
  }

  // Applies every pending update in insertion order when forced or when the
  // buffer is full.
  std::size_t batch_commit(bool force) {
    std::lock_guard lk(mu_);
    if (!force && pending_.size() < coord_.batch_size) return 0;
    return commit_locked();
  }

  std::size_t pending_updates() const {
    std::lock_guard lk(mu_);
    return pending_.size();
  }
  std::uint64_t updates_applied() const {
    std::lock_guard lk(mu_);
    return applied_;
  }

  std::uint64_t suppressed(SuppressReason r) const {
    std::lock_guard lk(mu_);
    return suppressed_[static_cast<std::size_t>(r)];
  }

 private:
  std::size_t commit_locked() {
    for (const auto& t : pending_) apply(qvstore_, t, params_);
    std::size_t n = pending_.size();
    applied_ += n;
    pending_.clear();
    return n;
  }

  QVStore qvstore_;
  EvaluationQueue eq_;
  GlobalStateTable gst_;
  CoordConfig coord_;
  LearnParams params_;
  std::unordered_map<std::uint64_t, InFlight> inflight_;
  std::vector<SarsaTuple> pending_;
  std::uint64_t applied_ = 0;
  std::array<std::uint64_t, 4> suppressed_{};
  mutable std::mutex mu_;
};

}  // namespace crlsim
