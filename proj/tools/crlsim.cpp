#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crlsim/crlsim.hpp"
#include "crlsim/experiment.hpp"

#ifndef CRLSIM_VERSION
#define CRLSIM_VERSION "0.0.0"
#endif

namespace {

using namespace crlsim;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

// Defaults before the config file is read; CRLSIM_SEED replaces the built-in seed.
RunSpec env_defaults() {
  RunSpec d;
  if (const char* s = std::getenv("CRLSIM_SEED")) apply_setting(d, "seed", s);
  return d;
}

ExperimentSpec load_spec(const std::string& path, const std::vector<std::string>& sets,
                         const std::optional<std::uint64_t>& seed) {
  ExperimentSpec spec = path.empty() ? ExperimentSpec{env_defaults(), {}} : parse_config_file(path, env_defaults());
  for (const auto& kv : sets) apply_assignment(spec.base, kv);
  if (seed) spec.base.sim.seed = *seed;
  return spec;
}

std::string fmt_kb(std::uint64_t bits) {
  char buf[32];
  if (bits % 1024 == 0)
    std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(bits / 1024));
  else
    std::snprintf(buf, sizeof buf, "%.2f", StorageBits::kb(bits));
  return buf;
}

void print_overhead(const StorageGeometry& g, std::ostream& os) {
  auto b = storage_bits(g);
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %12s %10s\n", "structure", "bits", "Kb");
  os << line;
  std::snprintf(line, sizeof line, "%-10s %12llu %10s\n", "QVStore", static_cast<unsigned long long>(b.qvstore_bits),
                fmt_kb(b.qvstore_bits).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-10s %12llu %10s\n", "EQ", static_cast<unsigned long long>(b.eq_bits),
                fmt_kb(b.eq_bits).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-10s %12llu %10s\n", "Total", static_cast<unsigned long long>(b.total_bits),
                fmt_kb(b.total_bits).c_str());
  os << line;
  os << "QVStore: " << g.qvstore.n_vaults << " vaults x " << g.qvstore.planes_per_vault << " planes x "
     << g.qvstore.feature_dim << " features x " << g.qvstore.action_dim << " actions x " << g.qvstore.q_width_bits
     << " bits\n";
  os << "EQ: " << g.eq_entries << " entries x " << b.eq_entry_bits << " bits per entry\n";
  os << "EQ entry bits: " << b.eq_entry_bits << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crlsim: trace-driven multicore prefetching simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string format;

  auto* run = app.add_subcommand("run", "Run the configured prefetcher next to a no-prefetch baseline");
  run->add_option("config", config_path, "Config file (key = value lines)");
  run->add_option("--set", sets, "Override a config key, key=value (repeatable)");
  run->add_option("--seed", seed, "Simulation seed");
  run->add_option("--out", out_path, "Output file (default: output.path, else stdout)");
  run->add_option("--format", format, "csv or json");

  std::string out_dir;
  bool resume = false;
  auto* sweep = app.add_subcommand("sweep", "Run the cross product of the sweep.* axes of a config");
  sweep->add_option("config", config_path, "Experiment config file")->required();
  sweep->add_option("--set", sets, "Override a config key, key=value (repeatable)");
  sweep->add_option("--seed", seed, "Simulation seed");
  sweep->add_option("--out-dir", out_dir, "Directory for manifest, per-variant and combined outputs")->required();
  sweep->add_flag("--resume", resume, "Skip variants the existing manifest marks done");

  std::string kind, trace_out;
  std::optional<unsigned> cores;
  std::optional<std::uint64_t> length, tseed;
  std::optional<std::int64_t> stride;
  std::optional<double> shared;
  auto* gen = app.add_subcommand("gen-trace", "Write a synthetic multicore trace file");
  gen->add_option("config", config_path, "Config file supplying trace.* keys");
  gen->add_option("--set", sets, "Override a config key, key=value (repeatable)");
  gen->add_option("--kind", kind, "stream, stride, shared_stream or pointer_chase_like");
  gen->add_option("--cores", cores, "Number of cores");
  gen->add_option("--length", length, "Records per core");
  gen->add_option("--stride", stride, "Stride in bytes");
  gen->add_option("--shared-fraction", shared, "Fraction of shared-region accesses");
  gen->add_option("--seed", tseed, "Generator seed");
  gen->add_option("--out", trace_out, "Output trace path")->required();

  StorageGeometry geom;
  auto* overhead = app.add_subcommand("overhead", "Print the storage breakdown of the learning structures");
  overhead->add_option("--vaults", geom.qvstore.n_vaults, "QVStore vaults");
  overhead->add_option("--planes", geom.qvstore.planes_per_vault, "Planes per vault");
  overhead->add_option("--feature-dim", geom.qvstore.feature_dim, "Entries per plane (feature dimension)");
  overhead->add_option("--action-dim", geom.qvstore.action_dim, "Action dimension");
  overhead->add_option("--q-width", geom.qvstore.q_width_bits, "Q-value width in bits");
  overhead->add_option("--eq-entries", geom.eq_entries, "Evaluation queue entries");

  auto* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*version) {
      std::cout << "crlsim " << CRLSIM_VERSION << " (csv schema " << kSchemaVersion << ")\n";
      return kExitOk;
    }
    if (*overhead) {
      print_overhead(geom, std::cout);
      return kExitOk;
    }
    if (*gen) {
      auto spec = load_spec(config_path, sets, std::nullopt);
      auto& r = spec.base;
      if (!kind.empty()) apply_setting(r, "trace.kind", kind);
      if (cores) r.sim.n_cores = *cores;
      if (length) apply_setting(r, "trace.length", std::to_string(*length));
      if (stride) r.trace.synthetic.stride_bytes = *stride;
      if (shared) r.trace.synthetic.shared_fraction = *shared;
      if (tseed) r.trace.synthetic.seed = *tseed;
      r.trace.file.clear();
      SyntheticSpec s = r.trace.synthetic;
      if (r.trace.length_auto) s.length = r.sim.warmup_events + r.sim.sim_events;
      auto traces = generate(s, r.sim.n_cores);
      std::ostringstream os;
      write_trace(os, traces);
      write_file(trace_out, os.str());
      return kExitOk;
    }
    if (*run) {
      auto spec = load_spec(config_path, sets, seed);
      if (!spec.axes.empty()) throw ConfigError("sweep." + spec.axes.front().key, "sweep axes need the sweep command");
      auto& r = spec.base;
      if (!format.empty()) r.output_format = parse_report_format(format);
      if (!out_path.empty()) r.output_path = out_path;
      r.validate();
      auto content = render(run_paired(r), r.output_format);
      if (r.output_path.empty())
        std::cout << content;
      else
        write_file(r.output_path, content);
      return kExitOk;
    }
    if (*sweep) {
      auto spec = load_spec(config_path, sets, seed);
      auto sum = run_sweep(spec, out_dir, resume, &std::cerr);
      std::cerr << sum.variants << " variants, " << sum.executed << " run, " << sum.skipped << " skipped; manifest "
                << sum.manifest.string() << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
