#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "crlsim/error.hpp"

namespace crlsim {

inline constexpr std::uint64_t kPageBytes = 4096;

struct TraceRecord {
  std::uint64_t pc = 0;
  std::uint64_t addr = 0;
  unsigned core_id = 0;
  bool is_write = false;
  std::uint64_t seq = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

using CoreTrace = std::vector<TraceRecord>;

enum class SyntheticKind { stream, stride, shared_stream, pointer_chase_like };

inline std::string_view to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::stream: return "stream";
    case SyntheticKind::stride: return "stride";
    case SyntheticKind::shared_stream: return "shared_stream";
    case SyntheticKind::pointer_chase_like: return "pointer_chase_like";
  }
  return "?";
}

inline std::optional<SyntheticKind> parse_synthetic_kind(std::string_view s) {
  if (s == "stream") return SyntheticKind::stream;
  if (s == "stride") return SyntheticKind::stride;
  if (s == "shared_stream") return SyntheticKind::shared_stream;
  if (s == "pointer_chase_like") return SyntheticKind::pointer_chase_like;
  return std::nullopt;
}

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::stream;
  std::uint64_t length = 1;
  std::int64_t stride_bytes = 64;
  std::uint64_t region_base = 0x10000000;
  double shared_fraction = 0.0;
  std::uint64_t seed = 1;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Portable generator: the standard distributions are implementation-defined,
// so traces would not be byte-identical across toolchains if we used them.
class TraceRng {
 public:
  explicit TraceRng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return splitmix64(state_++); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

 private:
  std::uint64_t state_;
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<std::uint64_t> parse_hex(std::string_view s) {
  if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) return std::nullopt;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data() + 2, s.data() + s.size(), v, 16);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> parse_dec(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 10);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// Reads "<core> <0xpc> <0xaddr> <R|W>" lines. seq is assigned per core in
// file order. When max_cores is given, core ids >= max_cores are rejected.
inline std::vector<TraceRecord> parse_trace(std::istream& in,
                                            std::optional<unsigned> max_cores = std::nullopt) {
  std::vector<TraceRecord> out;
  std::vector<std::uint64_t> next_seq;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto fields = detail::split_ws(line);
    if (fields.size() != 4) throw TraceParseError(lineno, "expected 4 fields, got " + std::to_string(fields.size()));
    auto core = detail::parse_dec(fields[0]);
    if (!core || *core > 0xFFFF) throw TraceFormatError(lineno, "unknown core id '" + std::string(fields[0]) + "'");
    if (max_cores && *core >= *max_cores)
      throw TraceFormatError(lineno, "core id " + std::to_string(*core) + " >= core count " + std::to_string(*max_cores));
    auto pc = detail::parse_hex(fields[1]);
    if (!pc) throw TraceParseError(lineno, "bad pc '" + std::string(fields[1]) + "'");
    auto addr = detail::parse_hex(fields[2]);
    if (!addr) throw TraceParseError(lineno, "bad address '" + std::string(fields[2]) + "'");
    if (fields[3] != "R" && fields[3] != "W")
      throw TraceParseError(lineno, "bad access type '" + std::string(fields[3]) + "'");
    TraceRecord r;
    r.core_id = static_cast<unsigned>(*core);
    r.pc = *pc;
    r.addr = *addr;
    r.is_write = fields[3] == "W";
    if (next_seq.size() <= r.core_id) next_seq.resize(r.core_id + 1, 0);
    r.seq = next_seq[r.core_id]++;
    out.push_back(r);
  }
  return out;
}

inline std::vector<TraceRecord> parse_trace(const std::string& path,
                                            std::optional<unsigned> max_cores = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file '" + path + "'");
  return parse_trace(in, max_cores);
}

inline std::vector<CoreTrace> split_by_core(const std::vector<TraceRecord>& records, unsigned n_cores) {
  std::vector<CoreTrace> out(n_cores);
  for (const auto& r : records) {
    if (r.core_id >= n_cores)
      throw TraceFormatError(0, "core id " + std::to_string(r.core_id) + " >= core count " + std::to_string(n_cores));
    out[r.core_id].push_back(r);
  }
  return out;
}

inline void write_record(std::ostream& os, const TraceRecord& r) {
  char buf[96];
  int n = std::snprintf(buf, sizeof buf, "%u 0x%llx 0x%llx %c\n", r.core_id,
                        static_cast<unsigned long long>(r.pc), static_cast<unsigned long long>(r.addr),
                        r.is_write ? 'W' : 'R');
  os.write(buf, n);
}

// Interleaves cores round-robin so the file reads in rough program order.
inline void write_trace(std::ostream& os, const std::vector<CoreTrace>& traces) {
  std::size_t longest = 0;
  for (const auto& t : traces) longest = std::max(longest, t.size());
  for (std::size_t i = 0; i < longest; ++i)
    for (const auto& t : traces)
      if (i < t.size()) write_record(os, t[i]);
}

inline void validate(const SyntheticSpec& spec, unsigned n_cores) {
  if (n_cores < 1) throw ConfigError("n_cores", "must be >= 1");
  if (spec.length == 0) throw ConfigError("trace.length", "must be > 0");
  if ((spec.kind == SyntheticKind::stream || spec.kind == SyntheticKind::stride) && spec.stride_bytes == 0)
    throw ConfigError("trace.stride", "must be non-zero for " + std::string(to_string(spec.kind)));
  if (!(spec.shared_fraction >= 0.0 && spec.shared_fraction <= 1.0))
    throw ConfigError("trace.shared_fraction", "must lie in [0, 1]");
}

// Number of shared-region accesses among the first i records of a
// shared_stream core: floor(i * f). Position i is shared when this count
// steps between i and i + 1.
inline std::uint64_t shared_prefix(std::uint64_t i, double f) {
  return static_cast<std::uint64_t>(std::floor(static_cast<double>(i) * f));
}

// Private regions are 4 GiB apart; the shared region sits at region_base and
// core c's private region at region_base + (c + 1) * kCoreRegionSpan.
inline constexpr std::uint64_t kCoreRegionSpan = 1ull << 32;

inline std::vector<CoreTrace> generate(const SyntheticSpec& spec, unsigned n_cores) {
  validate(spec, n_cores);
  const std::uint64_t L = spec.length;
  const std::int64_t stride = spec.stride_bytes != 0 ? spec.stride_bytes : 64;
  const std::uint64_t mag = static_cast<std::uint64_t>(stride < 0 ? -stride : stride);
  // a descending stream starts at the top so every address stays >= its base
  auto walk = [&](std::uint64_t base, std::uint64_t i) {
    if (stride > 0) return base + i * mag;
    return base + (L - 1) * mag - i * mag;
  };

  std::vector<CoreTrace> out(n_cores);
  for (unsigned c = 0; c < n_cores; ++c) {
    auto& t = out[c];
    t.reserve(L);
    detail::TraceRng rng(detail::splitmix64(spec.seed ^ (0xC0FFEEull * (c + 1))));
    const std::uint64_t own_base = spec.region_base + (c + 1) * kCoreRegionSpan;
    auto push = [&](std::uint64_t pc, std::uint64_t addr, bool w) {
      t.push_back(TraceRecord{pc, addr, c, w, t.size()});
    };
    switch (spec.kind) {
      case SyntheticKind::stream:
        for (std::uint64_t i = 0; i < L; ++i) push(0x400000, walk(c == 0 ? spec.region_base : own_base, i), false);
        break;
      case SyntheticKind::stride: {
        constexpr unsigned kStreams = 4;
        std::uint64_t pos[kStreams] = {};
        for (std::uint64_t i = 0; i < L; ++i) {
          auto s = static_cast<unsigned>(rng.below(kStreams));
          std::uint64_t base = (c == 0 ? spec.region_base : own_base) + s * (1ull << 28);
          push(0x400100 + 4 * s, walk(base, pos[s]++), rng.below(8) == 0);
        }
        break;
      }
      case SyntheticKind::shared_stream: {
        std::uint64_t shared_i = 0, private_i = 0;
        for (std::uint64_t i = 0; i < L; ++i) {
          bool shared = shared_prefix(i + 1, spec.shared_fraction) > shared_prefix(i, spec.shared_fraction);
          if (shared)
            push(0x401000, walk(spec.region_base, shared_i++), false);
          else
            push(0x402000, walk(own_base, private_i++), false);
        }
        break;
      }
      case SyntheticKind::pointer_chase_like: {
        const std::uint64_t nodes = std::min<std::uint64_t>(L, 1u << 14);
        std::vector<std::uint64_t> order(nodes);
        for (std::uint64_t i = 0; i < nodes; ++i) order[i] = i;
        for (std::uint64_t i = nodes; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        const std::uint64_t base = c == 0 ? spec.region_base : own_base;
        for (std::uint64_t i = 0; i < L; ++i) push(0x403000, base + order[i % nodes] * mag, false);
        break;
      }
    }
  }
  return out;
}

}  // namespace crlsim
