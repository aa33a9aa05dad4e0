#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "crlsim/error.hpp"

namespace crlsim {

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

enum class StrideClass : int { none = 0, positive = 1, negative = 2, irregular = 3 };

struct StateVector {
  std::uint64_t pc_sig = 0;
  std::int64_t delta_sig = 0;  // lines, relative to the previous access in the same page
  int stride_sig = 0;          // StrideClass
  int hitmiss_sig = 0;         // 1 if the core's previous demand access hit in L1
  int reuse_sig = 0;           // 0 = not seen in the window, else 1 + floor(log2(distance))
  unsigned core_id = 0;

  friend bool operator==(const StateVector&, const StateVector&) = default;
};

struct HistoryEntry {
  std::uint64_t pc = 0;
  std::uint64_t line = 0;
};

struct AccessContext {
  std::span<const HistoryEntry> history;  // oldest first; back() is the triggering access
  bool last_hit = false;
  unsigned core_id = 0;
  std::uint64_t lines_per_page = 64;
};

inline std::uint64_t fold_pc(std::uint64_t pc) { return (pc ^ (pc >> 12) ^ (pc >> 24)) & 0xFFFFF; }

inline StateVector extract_state(const AccessContext& ctx) {
  StateVector s;
  s.core_id = ctx.core_id;
  s.hitmiss_sig = ctx.last_hit ? 1 : 0;
  if (ctx.history.empty()) return s;
  const auto& h = ctx.history;
  const std::size_t last = h.size() - 1;
  const auto cur = h[last];
  s.pc_sig = fold_pc(cur.pc);
  const std::uint64_t page = cur.line / ctx.lines_per_page;

  auto prev_in_page = [&](std::size_t from) -> std::optional<std::size_t> {
    for (std::size_t i = from; i-- > 0;)
      if (h[i].line / ctx.lines_per_page == page) return i;
    return std::nullopt;
  };
  if (auto p1 = prev_in_page(last)) {
    s.delta_sig = static_cast<std::int64_t>(cur.line) - static_cast<std::int64_t>(h[*p1].line);
    if (auto p2 = prev_in_page(*p1)) {
      auto d2 = static_cast<std::int64_t>(h[*p1].line) - static_cast<std::int64_t>(h[*p2].line);
      if (s.delta_sig == 0 && d2 == 0)
        s.stride_sig = static_cast<int>(StrideClass::none);
      else if (s.delta_sig == d2)
        s.stride_sig = static_cast<int>(s.delta_sig > 0 ? StrideClass::positive : StrideClass::negative);
      else
        s.stride_sig = static_cast<int>(StrideClass::irregular);
    }
  }
  for (std::size_t i = last; i-- > 0;) {
    if (h[i].line == cur.line) {
      std::uint64_t d = last - i;
      int b = 1;
      while (d > 1 && b < 7) { d >>= 1; ++b; }
      s.reuse_sig = b;
      break;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

struct PrefetchAction {
  unsigned action_id = 0;
  int delta_lines = 0;  // 0 means no prefetch
  friend bool operator==(const PrefetchAction&, const PrefetchAction&) = default;
};

class ActionTable {
 public:
  ActionTable() : deltas_{0, 1, 2, 3, 4, 6, 8, 12, 16, 24, 32, -1, -2, -4, -8, 5} {}
  explicit ActionTable(std::vector<int> deltas) : deltas_(std::move(deltas)) { validate(); }

  std::size_t size() const { return deltas_.size(); }
  PrefetchAction operator[](unsigned id) const { return {id, deltas_.at(id)}; }
  const std::vector<int>& deltas() const { return deltas_; }

  unsigned no_prefetch_id() const {
    for (unsigned i = 0; i < deltas_.size(); ++i)
      if (deltas_[i] == 0) return i;
    return 0;
  }

  void validate() const {
    if (deltas_.empty()) throw ConfigError("rl.action_table", "must not be empty");
    bool has_zero = false;
    for (std::size_t i = 0; i < deltas_.size(); ++i) {
      has_zero |= deltas_[i] == 0;
      for (std::size_t j = i + 1; j < deltas_.size(); ++j)
        if (deltas_[i] == deltas_[j]) throw ConfigError("rl.action_table", "duplicate delta " + std::to_string(deltas_[i]));
    }
    if (!has_zero) throw ConfigError("rl.action_table", "must contain the no-prefetch delta 0");
  }

 private:
  std::vector<int> deltas_;
};

// ---------------------------------------------------------------------------
// QVStore
// ---------------------------------------------------------------------------

struct QVGeometry {
  unsigned n_vaults = 2;
  unsigned planes_per_vault = 3;
  unsigned feature_dim = 128;
  unsigned action_dim = 16;
  unsigned q_width_bits = 16;

  unsigned n_planes() const { return n_vaults * planes_per_vault; }
  std::size_t n_cells() const {
    return std::size_t{n_vaults} * planes_per_vault * feature_dim * action_dim;
  }

  void validate() const {
    if (n_vaults == 0) throw ConfigError("qvstore.vaults", "must be > 0");
    if (planes_per_vault == 0) throw ConfigError("qvstore.planes", "must be > 0");
    if (feature_dim == 0) throw ConfigError("qvstore.feature_dim", "must be > 0");
    if (action_dim == 0) throw ConfigError("qvstore.action_dim", "must be > 0");
    if (q_width_bits < 2 || q_width_bits > 32) throw ConfigError("qvstore.q_width_bits", "must lie in [2, 32]");
  }
};

enum class Regime { exclusive, shared };

// Feature subset hashed by each plane, cycled when the geometry has more
// than six planes:
//   vault 0: {pc}, {pc ^ delta}, {delta, stride}
//   vault 1: {pc, hitmiss}, {reuse, stride}, {pc, core}
enum class PlaneFeatures { pc, pc_xor_delta, delta_stride, pc_hitmiss, reuse_stride, pc_core };

inline PlaneFeatures plane_features(unsigned vault, unsigned plane, unsigned planes_per_vault) {
  static constexpr PlaneFeatures kTable[6] = {PlaneFeatures::pc,         PlaneFeatures::pc_xor_delta,
                                              PlaneFeatures::delta_stride, PlaneFeatures::pc_hitmiss,
                                              PlaneFeatures::reuse_stride, PlaneFeatures::pc_core};
  return kTable[(vault * planes_per_vault + plane) % 6];
}

namespace detail {
inline std::uint64_t pair_key(std::uint64_t a, std::uint64_t b) { return a * 0x100000001B3ull ^ (b + 0x51ED27ull); }
}  // namespace detail

inline unsigned plane_index(const StateVector& s, unsigned vault, unsigned plane, const QVGeometry& g) {
  auto delta = static_cast<std::uint64_t>(s.delta_sig);
  std::uint64_t key = 0;
  switch (plane_features(vault, plane, g.planes_per_vault)) {
    case PlaneFeatures::pc: key = s.pc_sig; break;
    case PlaneFeatures::pc_xor_delta: key = s.pc_sig ^ (delta << 7); break;
    case PlaneFeatures::delta_stride: key = detail::pair_key(delta, static_cast<std::uint64_t>(s.stride_sig)); break;
    case PlaneFeatures::pc_hitmiss: key = detail::pair_key(s.pc_sig, static_cast<std::uint64_t>(s.hitmiss_sig)); break;
    case PlaneFeatures::reuse_stride:
      key = detail::pair_key(static_cast<std::uint64_t>(s.reuse_sig), static_cast<std::uint64_t>(s.stride_sig));
      break;
    case PlaneFeatures::pc_core: key = detail::pair_key(s.pc_sig, s.core_id); break;
  }
  const std::uint64_t salt = (std::uint64_t{vault} << 8 | plane) * 0xD6E8FEB86659FD93ull;
  const std::uint64_t h = (key ^ salt) * 0x9E3779B97F4A7C15ull;
  return static_cast<unsigned>((h >> 32) % g.feature_dim);
}

// One feature index per (vault, plane), vault-major.
inline std::vector<unsigned> plane_indices(const StateVector& s, const QVGeometry& g) {
  std::vector<unsigned> idx;
  idx.reserve(g.n_planes());
  for (unsigned v = 0; v < g.n_vaults; ++v)
    for (unsigned p = 0; p < g.planes_per_vault; ++p) idx.push_back(plane_index(s, v, p, g));
  return idx;
}

// q[vault][plane][feature][action]. In the shared regime every cell read and
// read-modify-write is atomic; no ordering holds across cells. In quantized
// mode each stored value is rounded to signed fixed point with 8 fractional
// bits within q_width_bits, saturating at the range ends.
class QVStore {
 public:
  static constexpr int kFracBits = 8;

  explicit QVStore(const QVGeometry& g = {}, Regime regime = Regime::exclusive, bool quantized = false)
      : geom_(g), regime_(regime), quantized_(quantized) {
    geom_.validate();
    cells_ = std::make_unique<std::atomic<double>[]>(geom_.n_cells());
    for (std::size_t i = 0; i < geom_.n_cells(); ++i) cells_[i].store(0.0, std::memory_order_relaxed);
  }

  QVStore(const QVStore& o) : QVStore(o.geom_, o.regime_, o.quantized_) {
    for (std::size_t i = 0; i < geom_.n_cells(); ++i) cells_[i].store(o.raw(i), std::memory_order_relaxed);
  }
  QVStore& operator=(const QVStore& o) {
    if (this != &o) *this = QVStore(o);
    return *this;
  }
  QVStore(QVStore&&) noexcept = default;
  QVStore& operator=(QVStore&&) noexcept = default;

  const QVGeometry& geometry() const { return geom_; }
  Regime regime() const { return regime_; }
  bool quantized() const { return quantized_; }
  double step() const { return std::ldexp(1.0, -kFracBits); }

  std::size_t offset(unsigned vault, unsigned plane, unsigned feature, unsigned action) const {
    return ((std::size_t{vault} * geom_.planes_per_vault + plane) * geom_.feature_dim + feature) * geom_.action_dim +
           action;
  }

  double cell(unsigned vault, unsigned plane, unsigned feature, unsigned action) const {
    return raw(offset(vault, plane, feature, action));
  }

  void set_cell(unsigned vault, unsigned plane, unsigned feature, unsigned action, double v) {
    cells_[offset(vault, plane, feature, action)].store(representable(v), order());
  }

  // Adds delta to one cell; returns the value stored.
  double add_cell(std::size_t off, double delta) {
    auto& c = cells_[off];
    if (regime_ == Regime::exclusive) {
      double v = representable(c.load(std::memory_order_relaxed) + delta);
      c.store(v, std::memory_order_relaxed);
      return v;
    }
    double cur = c.load(std::memory_order_acquire);
    double next;
    do {
      next = representable(cur + delta);
    } while (!c.compare_exchange_weak(cur, next, std::memory_order_acq_rel, std::memory_order_acquire));
    return next;
  }

  double raw(std::size_t off) const { return cells_[off].load(order()); }

  // Value as it would be stored: identity in real mode, rounded and
  // saturated fixed point in quantized mode.
  double representable(double v) const {
    if (!quantized_) return v;
    const double scale = std::ldexp(1.0, kFracBits);
    const double hi = std::ldexp(1.0, static_cast<int>(geom_.q_width_bits) - 1) - 1.0;
    const double lo = -std::ldexp(1.0, static_cast<int>(geom_.q_width_bits) - 1);
    double q = std::nearbyint(v * scale);
    q = std::min(hi, std::max(lo, q));
    return q / scale;
  }

  std::vector<double> snapshot() const {
    std::vector<double> out(geom_.n_cells());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = raw(i);
    return out;
  }

  void fill(double v) {
    for (std::size_t i = 0; i < geom_.n_cells(); ++i) cells_[i].store(representable(v), order());
  }

 private:
  std::memory_order order() const {
    return regime_ == Regime::shared ? std::memory_order_seq_cst : std::memory_order_relaxed;
  }

  QVGeometry geom_;
  Regime regime_;
  bool quantized_;
  std::unique_ptr<std::atomic<double>[]> cells_;
};

inline double q_value(const QVStore& store, std::span<const unsigned> indices, unsigned action) {
  const auto& g = store.geometry();
  double sum = 0.0;
  unsigned k = 0;
  for (unsigned v = 0; v < g.n_vaults; ++v)
    for (unsigned p = 0; p < g.planes_per_vault; ++p, ++k) sum += store.cell(v, p, indices[k], action);
  return sum;
}

inline double q_value(const QVStore& store, const StateVector& s, unsigned action) {
  auto idx = plane_indices(s, store.geometry());
  return q_value(store, idx, action);
}

// ---------------------------------------------------------------------------
// Policy and learning
// ---------------------------------------------------------------------------

struct LearnParams {
  double alpha = 0.1;
  double gamma = 0.5;
  double epsilon = 0.1;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("rl.alpha", "must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("rl.gamma", "must lie in [0, 1)");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("rl.epsilon", "must lie in [0, 1]");
  }
};

using PolicyRng = std::mt19937_64;

// Lowest action id wins ties.
inline unsigned greedy_action(const QVStore& store, std::span<const unsigned> indices) {
  unsigned best = 0;
  double best_q = q_value(store, indices, 0);
  for (unsigned a = 1; a < store.geometry().action_dim; ++a) {
    double q = q_value(store, indices, a);
    if (q > best_q) {
      best_q = q;
      best = a;
    }
  }
  return best;
}

inline PrefetchAction select_action(const QVStore& store, const ActionTable& actions, const StateVector& s,
                                    const LearnParams& params, PolicyRng& rng) {
  const auto n = static_cast<unsigned>(store.geometry().action_dim);
  // Exactly one draw per decision, plus one more when exploring, so the
  // stream consumed is independent of the Q contents.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  if (u < params.epsilon) return actions[static_cast<unsigned>(rng() % n)];
  auto idx = plane_indices(s, store.geometry());
  return actions[greedy_action(store, idx)];
}

struct Successor {
  StateVector state;
  unsigned action = 0;
};

// SARSA: t = old + alpha * (r + gamma * Q(s', a') - old). Q(s, a) becomes t,
// with the change split evenly across the contributing cells. A missing
// successor bootstraps with 0.
inline double sarsa_update(QVStore& store, const StateVector& s, unsigned a, double r,
                           const std::optional<Successor>& next, const LearnParams& params) {
  const auto& g = store.geometry();
  auto idx = plane_indices(s, g);
  const double old_q = q_value(store, idx, a);
  const double future_q = next ? q_value(store, next->state, next->action) : 0.0;
  const double target = old_q + params.alpha * (r + params.gamma * future_q - old_q);
  if (!std::isfinite(target)) throw NumericError("non-finite SARSA target");
  const double per_cell = (target - old_q) / static_cast<double>(g.n_planes());
  unsigned k = 0;
  for (unsigned v = 0; v < g.n_vaults; ++v)
    for (unsigned p = 0; p < g.planes_per_vault; ++p, ++k) store.add_cell(store.offset(v, p, idx[k], a), per_cell);
  return target;
}

// ---------------------------------------------------------------------------
// Storage overhead
// ---------------------------------------------------------------------------

struct EqEntryLayout {
  unsigned state_bits = 21;
  unsigned action_bits = 5;
  unsigned reward_bits = 5;
  unsigned filled_bits = 1;
  unsigned address_bits = 16;
  unsigned core_bits = 4;
  unsigned total() const { return state_bits + action_bits + reward_bits + filled_bits + address_bits + core_bits; }
};

struct StorageGeometry {
  QVGeometry qvstore{};
  std::uint64_t eq_entries = 256;
  EqEntryLayout eq_entry{};
};

struct StorageBits {
  std::uint64_t qvstore_bits = 0;
  std::uint64_t eq_bits = 0;
  std::uint64_t total_bits = 0;
  unsigned eq_entry_bits = 0;

  static double kb(std::uint64_t bits) { return static_cast<double>(bits) / 1024.0; }
};

inline StorageBits storage_bits(const StorageGeometry& g) {
  StorageBits b;
  b.qvstore_bits = std::uint64_t{g.qvstore.n_vaults} * g.qvstore.planes_per_vault * g.qvstore.feature_dim *
                   g.qvstore.action_dim * g.qvstore.q_width_bits;
  b.eq_entry_bits = g.eq_entry.total();
  b.eq_bits = g.eq_entries * b.eq_entry_bits;
  b.total_bits = b.qvstore_bits + b.eq_bits;
  return b;
}

}  // namespace crlsim
