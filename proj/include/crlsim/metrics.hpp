#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "crlsim/coordination.hpp"
#include "crlsim/error.hpp"
#include "crlsim/memhier.hpp"

namespace crlsim {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kCsvHeader =
    "schema_version,run_id,prefetcher,n_cores,core,instructions,cycles,ipc,ipc_normalized,coverage,"
    "overprediction,accuracy,redundancy_rate,bw_utilization,llc_misses,baseline_llc_misses";

struct CoreMetrics {
  std::uint64_t instructions = 0;
  std::uint64_t cycles = 0;
  LevelCounters l1, l2, llc;
  std::uint64_t prefetches_issued = 0;  // candidates generated, before any filtering
  std::uint64_t prefetch_requests = 0;  // handed to the memory system
  std::uint64_t prefetch_fills = 0;
  std::uint64_t prefetch_covered_hits = 0;  // timely + late
  std::uint64_t prefetch_late_hits = 0;
  std::uint64_t useless_prefetch_evictions = 0;
  std::array<std::uint64_t, 3> suppressed{};  // in_cache, in_flight, cross_core_window
  std::uint64_t duplicate_in_cache = 0;
  std::uint64_t duplicate_in_flight = 0;
  std::uint64_t dram_requests = 0;
  std::uint64_t dram_busy_cycles = 0;
  std::optional<std::uint64_t> baseline_llc_misses;

  std::uint64_t suppressed_redundant() const { return suppressed[0] + suppressed[1] + suppressed[2]; }
  std::uint64_t& suppressed_for(SuppressReason r) { return suppressed.at(static_cast<std::size_t>(r) - 1); }
};

struct RunMetrics {
  std::vector<CoreMetrics> cores;

  // Sums across cores; cycles is the longest core's measured span.
  CoreMetrics aggregate() const {
    CoreMetrics a;
    bool have_baseline = !cores.empty();
    std::uint64_t base = 0;
    for (const auto& c : cores) {
      a.instructions += c.instructions;
      a.cycles = std::max(a.cycles, c.cycles);
      a.l1.hits += c.l1.hits, a.l1.misses += c.l1.misses;
      a.l2.hits += c.l2.hits, a.l2.misses += c.l2.misses;
      a.llc.hits += c.llc.hits, a.llc.misses += c.llc.misses;
      a.prefetches_issued += c.prefetches_issued;
      a.prefetch_requests += c.prefetch_requests;
      a.prefetch_fills += c.prefetch_fills;
      a.prefetch_covered_hits += c.prefetch_covered_hits;
      a.prefetch_late_hits += c.prefetch_late_hits;
      a.useless_prefetch_evictions += c.useless_prefetch_evictions;
      for (std::size_t i = 0; i < 3; ++i) a.suppressed[i] += c.suppressed[i];
      a.duplicate_in_cache += c.duplicate_in_cache;
      a.duplicate_in_flight += c.duplicate_in_flight;
      a.dram_requests += c.dram_requests;
      a.dram_busy_cycles += c.dram_busy_cycles;
      if (c.baseline_llc_misses)
        base += *c.baseline_llc_misses;
      else
        have_baseline = false;
    }
    if (have_baseline) a.baseline_llc_misses = base;
    return a;
  }

  void attach_baseline(const RunMetrics& baseline) {
    for (std::size_t i = 0; i < cores.size() && i < baseline.cores.size(); ++i)
      cores[i].baseline_llc_misses = baseline.cores[i].llc.misses;
  }
};

// Ratios with an undefined denominator stay empty rather than defaulting.
struct DerivedMetrics {
  double ipc = 0.0;
  std::optional<double> coverage;
  std::optional<double> overprediction;
  std::optional<double> accuracy;
  std::optional<double> redundancy_rate;
  std::optional<double> bw_utilization;
};

inline std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline DerivedMetrics compute(const CoreMetrics& m) {
  DerivedMetrics d;
  d.ipc = m.cycles == 0 ? 0.0 : static_cast<double>(m.instructions) / static_cast<double>(m.cycles);
  if (m.baseline_llc_misses) {
    d.coverage = ratio(m.prefetch_covered_hits, *m.baseline_llc_misses);
    d.overprediction = ratio(m.useless_prefetch_evictions, *m.baseline_llc_misses);
  }
  d.accuracy = ratio(m.prefetch_covered_hits, m.prefetch_fills);
  d.redundancy_rate =
      ratio(m.suppressed_redundant() + m.duplicate_in_cache + m.duplicate_in_flight, m.prefetches_issued);
  d.bw_utilization = ratio(m.dram_busy_cycles, m.cycles);
  return d;
}

struct RunReport {
  std::string run_id;
  std::string prefetcher;
  unsigned n_cores = 1;
  RunMetrics metrics;
  std::optional<std::string> normalize_to;  // run_id whose IPC the ipc_normalized column divides by
};

// One row per core plus an "aggregate" pseudo-core.
struct ReportRow {
  std::string run_id;
  std::string prefetcher;
  unsigned n_cores = 1;
  std::string core;
  std::uint64_t instructions = 0;
  std::uint64_t cycles = 0;
  double ipc = 0.0;
  std::optional<double> ipc_normalized;
  DerivedMetrics derived;
  std::uint64_t llc_misses = 0;
  std::optional<std::uint64_t> baseline_llc_misses;
};

inline std::vector<ReportRow> build_rows(const std::vector<RunReport>& runs) {
  auto rows_of = [](const RunReport& r) {
    std::vector<ReportRow> out;
    auto row = [&](std::string core, const CoreMetrics& m) {
      ReportRow x;
      x.run_id = r.run_id;
      x.prefetcher = r.prefetcher;
      x.n_cores = r.n_cores;
      x.core = std::move(core);
      x.instructions = m.instructions;
      x.cycles = m.cycles;
      x.derived = compute(m);
      x.ipc = x.derived.ipc;
      x.llc_misses = m.llc.misses;
      x.baseline_llc_misses = m.baseline_llc_misses;
      out.push_back(std::move(x));
    };
    for (std::size_t c = 0; c < r.metrics.cores.size(); ++c) row(std::to_string(c), r.metrics.cores[c]);
    row("aggregate", r.metrics.aggregate());
    return out;
  };

  std::vector<std::vector<ReportRow>> per_run;
  for (const auto& r : runs) per_run.push_back(rows_of(r));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].normalize_to) continue;
    const std::vector<ReportRow>* base = nullptr;
    for (std::size_t j = 0; j < runs.size(); ++j)
      if (runs[j].run_id == *runs[i].normalize_to) base = &per_run[j];
    if (!base) throw Error("baseline run '" + *runs[i].normalize_to + "' not among the emitted runs");
    for (auto& row : per_run[i])
      for (const auto& b : *base)
        if (b.core == row.core && b.ipc > 0.0) row.ipc_normalized = row.ipc / b.ipc;
  }
  std::vector<ReportRow> all;
  for (auto& v : per_run) all.insert(all.end(), v.begin(), v.end());
  return all;
}

namespace detail {
inline std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}
inline nlohmann::json json_opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }
}  // namespace detail

inline std::string to_csv(const std::vector<ReportRow>& rows, bool header = true) {
  std::ostringstream os;
  if (header) os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    os << kSchemaVersion << ',' << r.run_id << ',' << r.prefetcher << ',' << r.n_cores << ',' << r.core << ','
       << r.instructions << ',' << r.cycles << ',' << detail::fmt_opt(r.ipc) << ','
       << detail::fmt_opt(r.ipc_normalized) << ',' << detail::fmt_opt(r.derived.coverage) << ','
       << detail::fmt_opt(r.derived.overprediction) << ',' << detail::fmt_opt(r.derived.accuracy) << ','
       << detail::fmt_opt(r.derived.redundancy_rate) << ',' << detail::fmt_opt(r.derived.bw_utilization) << ','
       << r.llc_misses << ',' << (r.baseline_llc_misses ? std::to_string(*r.baseline_llc_misses) : "NA") << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const std::vector<ReportRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"schema_version", kSchemaVersion},
                   {"run_id", r.run_id},
                   {"prefetcher", r.prefetcher},
                   {"n_cores", r.n_cores},
                   {"core", r.core},
                   {"instructions", r.instructions},
                   {"cycles", r.cycles},
                   {"ipc", r.ipc},
                   {"ipc_normalized", detail::json_opt(r.ipc_normalized)},
                   {"coverage", detail::json_opt(r.derived.coverage)},
                   {"overprediction", detail::json_opt(r.derived.overprediction)},
                   {"accuracy", detail::json_opt(r.derived.accuracy)},
                   {"redundancy_rate", detail::json_opt(r.derived.redundancy_rate)},
                   {"bw_utilization", detail::json_opt(r.derived.bw_utilization)},
                   {"llc_misses", r.llc_misses},
                   {"baseline_llc_misses",
                    r.baseline_llc_misses ? nlohmann::json(*r.baseline_llc_misses) : nlohmann::json()}});
  }
  return arr;
}

enum class ReportFormat { csv, json };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ConfigError("output.format", "must be csv or json");
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

// Renders fully before opening the file so failures leave nothing behind.
inline void emit(const std::vector<RunReport>& runs, const std::string& path, ReportFormat format) {
  auto rows = build_rows(runs);
  std::string content = format == ReportFormat::csv ? to_csv(rows) : to_json(rows).dump(2) + "\n";
  write_file(path, content);
}

}  // namespace crlsim
