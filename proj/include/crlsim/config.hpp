#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crlsim/engine.hpp"
#include "crlsim/error.hpp"
#include "crlsim/metrics.hpp"
#include "crlsim/trace.hpp"

namespace crlsim {

struct TraceSource {
  std::string file;  // empty: synthetic
  SyntheticSpec synthetic{};
  bool length_auto = true;  // synthetic length = warmup + sim events
};

// Everything one `run` needs. qv_scale multiplies qvstore.feature_dim when
// the simulation config is resolved, which is how SLR-size sweeps are written.
struct RunSpec {
  std::string name = "crlsim";
  std::string run_id = "run";
  SimConfig sim{};
  double qv_scale = 1.0;
  TraceSource trace{};
  std::string output_path;  // empty: stdout
  ReportFormat output_format = ReportFormat::csv;

  SimConfig resolved() const {
    SimConfig c = sim;
    auto dim = std::llround(static_cast<double>(sim.rl.geometry.feature_dim) * qv_scale);
    if (dim < 1) throw ConfigError("qvstore.scale", "scaled feature_dim must be >= 1");
    c.rl.geometry.feature_dim = static_cast<unsigned>(dim);
    return c;
  }

  void validate() const {
    if (!(qv_scale > 0.0)) throw ConfigError("qvstore.scale", "must be > 0");
    if (run_id.empty()) throw ConfigError("run.id", "must not be empty");
    auto c = resolved();
    c.validate();
    if (trace.file.empty()) {
      SyntheticSpec s = trace.synthetic;
      if (trace.length_auto) s.length = std::max<std::uint64_t>(1, sim.warmup_events + sim.sim_events);
      crlsim::validate(s, sim.n_cores);
    }
  }
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

inline std::uint64_t cfg_u64(std::string_view key, std::string_view v) {
  std::uint64_t mult = 1;
  std::string s = lower(v);
  if (!s.empty() && (s.back() == 'k' || s.back() == 'm')) {
    mult = s.back() == 'k' ? 1024 : 1024 * 1024;
    s.pop_back();
  }
  std::optional<std::uint64_t> n = s.rfind("0x", 0) == 0 ? parse_hex(s) : parse_dec(s);
  if (!n) throw ConfigError(std::string(key), "expected a non-negative integer, got '" + std::string(v) + "'");
  return *n * mult;
}

inline std::uint64_t cfg_u64_max(std::string_view key, std::string_view v, std::uint64_t max) {
  auto n = cfg_u64(key, v);
  if (n > max) throw ConfigError(std::string(key), "value " + std::to_string(n) + " exceeds " + std::to_string(max));
  return n;
}

inline std::int64_t cfg_i64(std::string_view key, std::string_view v) {
  std::int64_t n = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(std::string(key), "expected an integer, got '" + std::string(v) + "'");
  return n;
}

inline double cfg_double(std::string_view key, std::string_view v) {
  std::string s(v);
  char* end = nullptr;
  double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(d))
    throw ConfigError(std::string(key), "expected a number, got '" + s + "'");
  return d;
}

inline bool cfg_bool(std::string_view key, std::string_view v) {
  auto s = lower(v);
  if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
  if (s == "off" || s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(std::string(key), "expected on/off, got '" + std::string(v) + "'");
}

inline std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

inline std::string fmt_bool(bool b) { return b ? "on" : "off"; }

inline Level cfg_target(std::string_view key, std::string_view v) {
  auto s = lower(v);
  if (s == "l2") return Level::L2;
  if (s == "llc") return Level::LLC;
  throw ConfigError(std::string(key), "expected l2 or llc, got '" + std::string(v) + "'");
}

// Deltas separated by ',' or ':' (the latter keeps tables usable inside a
// comma-separated sweep axis).
inline std::vector<int> cfg_deltas(std::string_view key, std::string_view v) {
  std::vector<int> out;
  std::size_t i = 0;
  while (i <= v.size()) {
    auto j = v.find_first_of(",:", i);
    if (j == std::string_view::npos) j = v.size();
    auto tok = detail::trim(v.substr(i, j - i));
    auto n = cfg_i64(key, tok);
    if (n < -4096 || n > 4096) throw ConfigError(std::string(key), "delta out of range");
    out.push_back(static_cast<int>(n));
    i = j + 1;
  }
  return out;
}

struct KeyDef {
  std::string_view key;
  std::function<void(RunSpec&, std::string_view)> set;
  std::function<std::string(const RunSpec&)> get;
};

template <class R>
inline auto& cache_of(R& r, char which) {
  return which == '1' ? r.sim.memory.l1 : which == '2' ? r.sim.memory.l2 : r.sim.memory.llc;
}

inline const std::vector<KeyDef>& key_table() {
  using S = std::string_view;
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    auto u64 = [&t](S k, auto member) {
      t.push_back({k, [k, member](RunSpec& r, S v) { member(r) = cfg_u64(k, v); },
                   [member](const RunSpec& r) { return std::to_string(member(r)); }});
    };
    auto uint = [&t](S k, auto member) {
      t.push_back({k, [k, member](RunSpec& r, S v) { member(r) = static_cast<unsigned>(cfg_u64_max(k, v, 1u << 30)); },
                   [member](const RunSpec& r) { return std::to_string(member(r)); }});
    };
    auto dbl = [&t](S k, auto member) {
      t.push_back({k, [k, member](RunSpec& r, S v) { member(r) = cfg_double(k, v); },
                   [member](const RunSpec& r) { return fmt_double(member(r)); }});
    };
    auto flag = [&t](S k, auto member) {
      t.push_back({k, [k, member](RunSpec& r, S v) { member(r) = cfg_bool(k, v); },
                   [member](const RunSpec& r) { return fmt_bool(member(r)); }});
    };
    auto str = [&t](S k, auto member) {
      t.push_back({k, [member](RunSpec& r, S v) { member(r) = std::string(v); },
                   [member](const RunSpec& r) { return member(r); }});
    };

    str("name", [](auto& r) -> auto& { return r.name; });
    str("run.id", [](auto& r) -> auto& { return r.run_id; });
    uint("n_cores", [](auto& r) -> auto& { return r.sim.n_cores; });
    u64("warmup_events", [](auto& r) -> auto& { return r.sim.warmup_events; });
    u64("sim_events", [](auto& r) -> auto& { return r.sim.sim_events; });
    u64("seed", [](auto& r) -> auto& { return r.sim.seed; });
    t.push_back({"prefetcher", [](RunSpec& r, S v) { r.sim.prefetcher = parse_prefetcher_kind(v); },
                 [](const RunSpec& r) { return std::string(to_string(r.sim.prefetcher)); }});
    t.push_back({"sim.mode",
                 [](RunSpec& r, S v) {
                   if (v == "deterministic")
                     r.sim.concurrent = false;
                   else if (v == "concurrent")
                     r.sim.concurrent = true;
                   else
                     throw ConfigError("sim.mode", "expected deterministic or concurrent, got '" + std::string(v) + "'");
                 },
                 [](const RunSpec& r) { return std::string(r.sim.concurrent ? "concurrent" : "deterministic"); }});
    t.push_back({"sim.schedule", [](RunSpec& r, S v) { r.sim.schedule = parse_schedule(v); },
                 [](const RunSpec& r) { return std::string(to_string(r.sim.schedule)); }});

    str("trace.file", [](auto& r) -> auto& { return r.trace.file; });
    t.push_back({"trace.kind",
                 [](RunSpec& r, S v) {
                   auto k = parse_synthetic_kind(v);
                   if (!k) throw ConfigError("trace.kind", "unknown synthetic kind '" + std::string(v) + "'");
                   r.trace.synthetic.kind = *k;
                 },
                 [](const RunSpec& r) { return std::string(to_string(r.trace.synthetic.kind)); }});
    t.push_back({"trace.length",
                 [](RunSpec& r, S v) {
                   if (v == "auto") {
                     r.trace.length_auto = true;
                     return;
                   }
                   r.trace.length_auto = false;
                   r.trace.synthetic.length = cfg_u64("trace.length", v);
                 },
                 [](const RunSpec& r) {
                   return r.trace.length_auto ? std::string("auto") : std::to_string(r.trace.synthetic.length);
                 }});
    t.push_back({"trace.stride", [](RunSpec& r, S v) { r.trace.synthetic.stride_bytes = cfg_i64("trace.stride", v); },
                 [](const RunSpec& r) { return std::to_string(r.trace.synthetic.stride_bytes); }});
    t.push_back({"trace.base", [](RunSpec& r, S v) { r.trace.synthetic.region_base = cfg_u64("trace.base", v); },
                 [](const RunSpec& r) {
                   char buf[24];
                   std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(r.trace.synthetic.region_base));
                   return std::string(buf);
                 }});
    dbl("trace.shared_fraction", [](auto& r) -> auto& { return r.trace.synthetic.shared_fraction; });
    u64("trace.seed", [](auto& r) -> auto& { return r.trace.synthetic.seed; });

    for (char which : {'1', '2', 'c'}) {
      static const char* names[] = {"l1", "l2", "llc"};
      const std::string_view base = names[which == '1' ? 0 : which == '2' ? 1 : 2];
      static std::deque<std::string> keep;  // key strings must outlive the table
      auto key = [&](const char* suffix) -> S {
        keep.push_back(std::string(base) + suffix);
        return keep.back();
      };
      u64(key(".size"), [which](auto& r) -> auto& { return cache_of(r, which).size_bytes; });
      u64(key(".assoc"), [which](auto& r) -> auto& { return cache_of(r, which).associativity; });
      u64(key(".latency"), [which](auto& r) -> auto& { return cache_of(r, which).latency_cycles; });
    }
    t.push_back({"line_bytes",
                 [](RunSpec& r, S v) {
                   auto n = cfg_u64("line_bytes", v);
                   if (n == 0 || (n & (n - 1)) != 0 || n > kPageBytes)
                     throw ConfigError("line_bytes", "must be a power of two no larger than the page");
                   r.sim.memory.l1.line_bytes = r.sim.memory.l2.line_bytes = r.sim.memory.llc.line_bytes = n;
                 },
                 [](const RunSpec& r) { return std::to_string(r.sim.memory.llc.line_bytes); }});
    u64("dram.service_latency", [](auto& r) -> auto& { return r.sim.memory.dram.service_latency; });
    u64("dram.min_gap", [](auto& r) -> auto& { return r.sim.memory.dram.min_gap; });
    t.push_back({"prefetch.target", [](RunSpec& r, S v) { r.sim.prefetch_target = cfg_target("prefetch.target", v); },
                 [](const RunSpec& r) { return std::string(r.sim.prefetch_target == Level::L2 ? "l2" : "llc"); }});
    t.push_back({"prefetch.trigger",
                 [](RunSpec& r, S v) {
                   if (v == "miss_or_prefetch_hit")
                     r.sim.rl.trigger = TriggerMode::miss_or_prefetch_hit;
                   else if (v == "miss_only")
                     r.sim.rl.trigger = TriggerMode::miss_only;
                   else
                     throw ConfigError("prefetch.trigger", "expected miss_or_prefetch_hit or miss_only");
                 },
                 [](const RunSpec& r) {
                   return std::string(r.sim.rl.trigger == TriggerMode::miss_only ? "miss_only" : "miss_or_prefetch_hit");
                 }});

    dbl("rl.alpha", [](auto& r) -> auto& { return r.sim.rl.learn.alpha; });
    dbl("rl.gamma", [](auto& r) -> auto& { return r.sim.rl.learn.gamma; });
    dbl("rl.epsilon", [](auto& r) -> auto& { return r.sim.rl.learn.epsilon; });
    t.push_back({"rl.action_table",
                 [](RunSpec& r, S v) { r.sim.rl.actions = ActionTable(cfg_deltas("rl.action_table", v)); },
                 [](const RunSpec& r) {
                   std::string s;
                   for (auto d : r.sim.rl.actions.deltas()) s += (s.empty() ? "" : ",") + std::to_string(d);
                   return s;
                 }});
    flag("rl.quantized", [](auto& r) -> auto& { return r.sim.rl.quantized; });
    t.push_back({"rl.history",
                 [](RunSpec& r, S v) { r.sim.rl.history_len = cfg_u64_max("rl.history", v, 4096); },
                 [](const RunSpec& r) { return std::to_string(r.sim.rl.history_len); }});
    uint("qvstore.vaults", [](auto& r) -> auto& { return r.sim.rl.geometry.n_vaults; });
    uint("qvstore.planes", [](auto& r) -> auto& { return r.sim.rl.geometry.planes_per_vault; });
    uint("qvstore.feature_dim", [](auto& r) -> auto& { return r.sim.rl.geometry.feature_dim; });
    uint("qvstore.action_dim", [](auto& r) -> auto& { return r.sim.rl.geometry.action_dim; });
    uint("qvstore.q_width_bits", [](auto& r) -> auto& { return r.sim.rl.geometry.q_width_bits; });
    dbl("qvstore.scale", [](auto& r) -> auto& { return r.qv_scale; });
    t.push_back({"eq.capacity", [](RunSpec& r, S v) { r.sim.rl.eq_capacity = cfg_u64_max("eq.capacity", v, 1u << 24); },
                 [](const RunSpec& r) { return std::to_string(r.sim.rl.eq_capacity); }});
    dbl("reward.at", [](auto& r) -> auto& { return r.sim.rl.rewards.r_at; });
    dbl("reward.al", [](auto& r) -> auto& { return r.sim.rl.rewards.r_al; });
    dbl("reward.in", [](auto& r) -> auto& { return r.sim.rl.rewards.r_in; });
    dbl("reward.np_low", [](auto& r) -> auto& { return r.sim.rl.rewards.r_np_low; });
    dbl("reward.np_high", [](auto& r) -> auto& { return r.sim.rl.rewards.r_np_high; });
    dbl("reward.pressure_threshold", [](auto& r) -> auto& { return r.sim.rl.rewards.pressure_threshold; });
    flag("coord.enabled", [](auto& r) -> auto& { return r.sim.coord.enabled; });
    flag("coord.filter", [](auto& r) -> auto& { return r.sim.coord.filter; });
    t.push_back({"coord.gst_capacity",
                 [](RunSpec& r, S v) { r.sim.coord.gst_capacity = cfg_u64_max("coord.gst_capacity", v, 1u << 24); },
                 [](const RunSpec& r) { return std::to_string(r.sim.coord.gst_capacity); }});
    u64("coord.window_cycles", [](auto& r) -> auto& { return r.sim.coord.window_cycles; });
    t.push_back({"coord.batch_size",
                 [](RunSpec& r, S v) { r.sim.coord.batch_size = cfg_u64_max("coord.batch_size", v, 1u << 24); },
                 [](const RunSpec& r) { return std::to_string(r.sim.coord.batch_size); }});
    str("output.path", [](auto& r) -> auto& { return r.output_path; });
    t.push_back({"output.format", [](RunSpec& r, S v) { r.output_format = parse_report_format(v); },
                 [](const RunSpec& r) { return std::string(r.output_format == ReportFormat::csv ? "csv" : "json"); }});
    return t;
  }();
  return table;
}

inline const KeyDef* find_key(std::string_view key) {
  for (const auto& k : key_table())
    if (k.key == key) return &k;
  return nullptr;
}

}  // namespace detail

inline void apply_setting(RunSpec& spec, std::string_view key, std::string_view value) {
  const auto* def = detail::find_key(key);
  if (!def) throw ConfigError(std::string(key), "unknown key");
  def->set(spec, detail::trim(value));
}

// "key=value" as given to --set.
inline void apply_assignment(RunSpec& spec, std::string_view kv) {
  auto eq = kv.find('=');
  if (eq == std::string_view::npos) throw ConfigError(std::string(detail::trim(kv)), "expected key=value");
  apply_setting(spec, detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
}

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

struct ExperimentSpec {
  RunSpec base{};
  std::vector<SweepAxis> axes;
};

// Line-oriented "key = value" text. '#' starts a comment; "sweep.<key> =
// v1, v2, ..." declares a sweep axis over <key>. Keys are validated as they
// are read, so an unknown key is reported with its line number.
inline ExperimentSpec parse_config(std::istream& in, RunSpec defaults = {}) {
  ExperimentSpec spec;
  spec.base = std::move(defaults);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    auto key = detail::trim(line.substr(0, eq));
    auto value = detail::trim(line.substr(eq + 1));
    if (key.rfind("sweep.", 0) == 0) {
      auto target = key.substr(6);
      if (!detail::find_key(target)) throw ConfigError(std::string(key), "unknown key");
      SweepAxis axis{std::string(target), {}};
      std::size_t i = 0;
      while (i <= value.size()) {
        auto j = value.find(',', i);
        if (j == std::string_view::npos) j = value.size();
        auto v = detail::trim(value.substr(i, j - i));
        if (v.empty()) throw ConfigError(std::string(key), "empty sweep value");
        RunSpec probe = spec.base;
        apply_setting(probe, target, v);
        axis.values.emplace_back(v);
        i = j + 1;
      }
      for (const auto& a : spec.axes)
        if (a.key == axis.key) throw ConfigError(std::string(key), "axis declared twice");
      spec.axes.push_back(std::move(axis));
      continue;
    }
    apply_setting(spec.base, key, value);
  }
  return spec;
}

inline ExperimentSpec parse_config_file(const std::string& path, RunSpec defaults = {}) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  return parse_config(f, std::move(defaults));
}

inline ExperimentSpec parse_config_text(const std::string& text, RunSpec defaults = {}) {
  std::istringstream in(text);
  return parse_config(in, std::move(defaults));
}

// Every key with its resolved value, in a form parse_config reads back.
inline std::string effective_config(const RunSpec& spec) {
  std::string out;
  for (const auto& k : detail::key_table()) {
    out += k.key;
    out += " = ";
    out += k.get(spec);
    out += '\n';
  }
  return out;
}

inline std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& k : detail::key_table()) out.emplace_back(k.key);
  return out;
}

struct Variant {
  std::size_t index = 0;
  RunSpec spec;
  std::vector<std::pair<std::string, std::string>> settings;  // axis values of this variant
};

// Cross product of the axes, first axis varying slowest.
inline std::vector<Variant> expand(const ExperimentSpec& exp) {
  std::vector<Variant> out;
  std::vector<std::size_t> pos(exp.axes.size(), 0);
  for (;;) {
    Variant v;
    v.index = out.size();
    v.spec = exp.base;
    for (std::size_t a = 0; a < exp.axes.size(); ++a) {
      const auto& val = exp.axes[a].values[pos[a]];
      apply_setting(v.spec, exp.axes[a].key, val);
      v.settings.emplace_back(exp.axes[a].key, val);
    }
    char id[32];
    std::snprintf(id, sizeof id, "-v%03zu", v.index);
    v.spec.run_id = exp.base.run_id + id;
    out.push_back(std::move(v));
    std::size_t a = exp.axes.size();
    while (a > 0) {
      --a;
      if (++pos[a] < exp.axes[a].values.size()) break;
      pos[a] = 0;
      if (a == 0) return out;
    }
    if (exp.axes.empty()) return out;
  }
}

inline std::vector<CoreTrace> load_traces(const RunSpec& spec) {
  const unsigned n = spec.sim.n_cores;
  if (!spec.trace.file.empty()) return split_by_core(parse_trace(spec.trace.file, n), n);
  SyntheticSpec s = spec.trace.synthetic;
  if (spec.trace.length_auto) s.length = spec.sim.warmup_events + spec.sim.sim_events;
  return generate(s, n);
}

}  // namespace crlsim
