#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crlsim/config.hpp"
#include "crlsim/engine.hpp"
#include "crlsim/metrics.hpp"

namespace crlsim {

inline std::string baseline_id(const std::string& run_id) { return run_id + "-baseline"; }

// A no-prefetch run and the configured prefetcher on identical traces. The
// baseline supplies coverage denominators and is the IPC normalization target.
inline std::vector<RunReport> run_paired(const RunSpec& spec) {
  spec.validate();
  const SimConfig cfg = spec.resolved();
  const auto traces = load_traces(spec);

  RunReport base;
  base.run_id = baseline_id(spec.run_id);
  base.prefetcher = std::string(to_string(PrefetcherKind::none));
  base.n_cores = cfg.n_cores;
  base.metrics = run_baseline(cfg, traces);
  base.metrics.attach_baseline(base.metrics);
  base.normalize_to = base.run_id;

  RunReport target;
  target.run_id = spec.run_id;
  target.prefetcher = std::string(to_string(cfg.prefetcher));
  target.n_cores = cfg.n_cores;
  target.metrics = cfg.prefetcher == PrefetcherKind::none ? base.metrics : run(cfg, traces).metrics;
  target.metrics.attach_baseline(base.metrics);
  target.normalize_to = base.run_id;
  return {base, target};
}

inline std::string render(const std::vector<RunReport>& runs, ReportFormat format) {
  auto rows = build_rows(runs);
  return format == ReportFormat::csv ? to_csv(rows) : to_json(rows).dump(2) + "\n";
}

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write to a sibling temp file, then rename, so a crash never leaves a
// half-written manifest behind.
inline void write_atomic(const std::filesystem::path& p, const std::string& content) {
  auto tmp = p;
  tmp += ".tmp";
  write_file(tmp.string(), content);
  std::error_code ec;
  std::filesystem::rename(tmp, p, ec);
  if (ec) throw IoError("cannot replace '" + p.string() + "': " + ec.message());
}

inline std::string csv_body(const std::string& csv) {
  auto nl = csv.find('\n');
  return nl == std::string::npos ? std::string() : csv.substr(nl + 1);
}

}  // namespace detail

struct SweepSummary {
  std::size_t variants = 0;
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::filesystem::path manifest;
  std::filesystem::path combined;
};

// Runs every variant of the cross product into out_dir:
//   manifest.json      variant list, axis values, effective configs, status
//   runs/<id>.cfg      effective config of the variant
//   runs/<id>.csv      baseline and target rows of the variant
//   combined.csv       all variant rows under one header
// The manifest is rewritten after each variant. With resume, variants the
// existing manifest marks done (and whose output still exists) are skipped.
inline SweepSummary run_sweep(const ExperimentSpec& exp, const std::filesystem::path& out_dir, bool resume,
                              std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  auto variants = expand(exp);
  for (const auto& v : variants) v.spec.validate();

  fs::create_directories(out_dir / "runs");
  const fs::path manifest_path = out_dir / "manifest.json";

  nlohmann::json previous;
  if (resume && fs::exists(manifest_path)) {
    try {
      previous = nlohmann::json::parse(detail::read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("corrupt manifest '" + manifest_path.string() + "': " + e.what());
    }
  }
  auto done_before = [&](const Variant& v, const std::string& cfg) {
    if (!previous.contains("variants")) return false;
    for (const auto& pv : previous["variants"])
      if (pv.value("run_id", "") == v.spec.run_id && pv.value("status", "") == "done" &&
          pv.value("effective_config", "") == cfg && fs::exists(out_dir / pv.value("output", "")))
        return true;
    return false;
  };

  nlohmann::json manifest;
  manifest["name"] = exp.base.name;
  manifest["schema_version"] = kSchemaVersion;
  manifest["base_config"] = effective_config(exp.base);
  manifest["axes"] = nlohmann::json::array();
  for (const auto& a : exp.axes) manifest["axes"].push_back({{"key", a.key}, {"values", a.values}});
  manifest["combined"] = "combined.csv";
  manifest["variants"] = nlohmann::json::array();
  for (const auto& v : variants) {
    nlohmann::json settings = nlohmann::json::object();
    for (const auto& [k, val] : v.settings) settings[k] = val;
    manifest["variants"].push_back({{"index", v.index},
                                    {"run_id", v.spec.run_id},
                                    {"baseline_run_id", baseline_id(v.spec.run_id)},
                                    {"settings", settings},
                                    {"config", "runs/" + v.spec.run_id + ".cfg"},
                                    {"output", "runs/" + v.spec.run_id + ".csv"},
                                    {"effective_config", effective_config(v.spec)},
                                    {"status", "pending"}});
  }

  SweepSummary sum;
  sum.variants = variants.size();
  sum.manifest = manifest_path;
  sum.combined = out_dir / "combined.csv";
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    auto& entry = manifest["variants"][i];
    const std::string cfg = entry["effective_config"];
    if (resume && done_before(v, cfg)) {
      entry["status"] = "done";
      ++sum.skipped;
      if (log) *log << "skip " << v.spec.run_id << '\n';
      continue;
    }
    detail::write_atomic(out_dir / entry["config"].get<std::string>(), cfg);
    auto csv = render(run_paired(v.spec), ReportFormat::csv);
    detail::write_atomic(out_dir / entry["output"].get<std::string>(), csv);
    entry["status"] = "done";
    ++sum.executed;
    if (log) *log << "done " << v.spec.run_id << '\n';
    detail::write_atomic(manifest_path, manifest.dump(2) + "\n");
  }

  std::string combined(kCsvHeader);
  combined += '\n';
  for (const auto& entry : manifest["variants"])
    combined += detail::csv_body(detail::read_file(out_dir / entry["output"].get<std::string>()));
  detail::write_atomic(sum.combined, combined);
  detail::write_atomic(manifest_path, manifest.dump(2) + "\n");
  return sum;
}

}  // namespace crlsim
