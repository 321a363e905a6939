// Experiment runner: one subcommand per experiment, CSV to --out (or stdout)
// and a short summary on the console.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "pipo/experiments.hpp"

using namespace pipo;

namespace {

struct Command {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;  // config key -> raw flag value
  std::map<std::string, CLI::Option*> options;
  std::string out_path;
  std::string config_path;
  bool search = false;
};

void bind(Command& c, const std::string& flag, const std::string& key, const std::string& help) {
  c.options[key] = c.app->add_option(flag, c.values[key], help);
}

// Heap-allocated: options bind to addresses inside `values`.
std::unique_ptr<Command> make_command(CLI::App& root, const std::string& name,
                                      const std::string& about, const std::string& schema) {
  auto cp = std::make_unique<Command>();
  Command& c = *cp;
  c.app = root.add_subcommand(name, about);
  c.app->footer("CSV columns: " + schema);
  bind(c, "--seed", "experiment.seed", "64-bit experiment seed");
  c.app->add_option("--out", c.out_path, "CSV output path (default: stdout)");
  c.app->add_option("--config", c.config_path, "key = value configuration file");
  return cp;
}

// Config file first, then explicit flags.
ConfigMap resolve(const Command& c) {
  ConfigMap cfg = c.config_path.empty() ? ConfigMap{} : ConfigMap::load(c.config_path);
  for (const auto& [key, opt] : c.options)
    if (opt->count() > 0) cfg.set(key, c.values.at(key));
  return cfg;
}

std::uint64_t seed_of(const ConfigMap& cfg) { return cfg.get_u64("experiment.seed").value_or(1); }

void print_summary(std::ostream& os, const std::string& label, const Summary& s) {
  os << label << ": mean=" << format_decimal(s.mean) << " std=" << format_decimal(s.stddev)
     << " min=" << format_decimal(s.min) << " max=" << format_decimal(s.max) << " n=" << s.count
     << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PiPoMonitor / Auto-Cuckoo filter experiments"};
  app.require_subcommand(1);

  auto occ_cmd = make_command(app, "occupancy", "Filter occupancy against insertions per MNK",
                             "mnk,insertions,occupancy");
  bind(*occ_cmd, "--mnk", "experiment.mnk_list", "comma-separated MNK values");
  bind(*occ_cmd, "--insertions", "experiment.insertions", "distinct insertions per curve");
  bind(*occ_cmd, "--sample-every", "experiment.sample_every", "sampling interval");
  bind(*occ_cmd, "--trials", "experiment.trials", "independent streams averaged per point");
  bind(*occ_cmd, "--buckets", "filter.buckets", "bucket count l");
  bind(*occ_cmd, "--entries", "filter.entries", "entries per bucket b");

  auto fpr_cmd = make_command(app, "fpr", "Fingerprint collision ratios per fingerprint width",
                             "f,collision_entry_ratio,multi_collision_ratio,theoretical_eps");
  bind(*fpr_cmd, "--f", "experiment.f_list", "comma-separated fingerprint widths");
  bind(*fpr_cmd, "--insertions", "experiment.insertions", "fresh-address insertions per width");
  bind(*fpr_cmd, "--snapshots", "experiment.snapshots", "snapshots averaged over the second half");
  bind(*fpr_cmd, "--buckets", "filter.buckets", "bucket count l");
  bind(*fpr_cmd, "--entries", "filter.entries", "entries per bucket b");

  auto bf_cmd = make_command(app, "brute-force", "Fills needed to flush one record",
                            "trial,fills");
  bind(*bf_cmd, "--trials", "experiment.trials", "independent trials");
  bind(*bf_cmd, "--warmup", "experiment.warmup", "background insertions before the target");
  bind(*bf_cmd, "--buckets", "filter.buckets", "bucket count l");
  bind(*bf_cmd, "--entries", "filter.entries", "entries per bucket b");
  bind(*bf_cmd, "--mnk", "filter.mnk", "maximal number of kicks");

  auto rev_cmd = make_command(
      app, "reverse", "Eviction-tree reverse attack",
      "b,mnk,eviction_set_size,fills_issued,success,materialized; with --search: "
      "b,mnk,subset_size,subsets,best_success_rate");
  bind(*rev_cmd, "--mnk", "experiment.mnk_list", "comma-separated MNK values");
  bind(*rev_cmd, "--buckets", "filter.buckets", "bucket count l");
  bind(*rev_cmd, "--entries", "filter.entries", "entries per bucket b");
  bind(*rev_cmd, "--fingerprint-bits", "filter.fingerprint_bits", "fingerprint width f");
  bind(*rev_cmd, "--trials", "experiment.trials", "seeds per subset (search)");
  bind(*rev_cmd, "--threshold", "experiment.threshold", "success rate a subset must reach (search)");
  rev_cmd->app->add_flag("--search", rev_cmd->search, "exhaustive search over subsets of the tree leaves");

  auto pp_cmd = make_command(
      app, "primeprobe", "Prime+Probe key recovery with the monitor off and on",
      "monitor,iteration,true_bit,inferred_bit,square_miss,multiply_miss,prefetch_installed");
  bind(*pp_cmd, "--key-bits", "attack.key_bits", "secret key length");
  bind(*pp_cmd, "--monitor", "attack.monitor", "on, off or both");
  bind(*pp_cmd, "--probe-period", "attack.probe_period", "cycles per attack iteration");
  bind(*pp_cmd, "--prefetch-delay", "monitor.prefetch_delay", "cycles from pEvict to prefetch");

  auto syn_cmd = make_command(app, "synthetic", "Benign captures on synthetic workloads",
                             "workload,captures_per_million_accesses,prefetches_issued");
  bind(*syn_cmd, "--accesses", "experiment.accesses", "accesses per workload");
  bind(*syn_cmd, "--workloads", "experiment.workloads",
       "comma-separated: streaming,hot-set-fits,thrash,uniform");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() ? e.get_exit_code() : 1;
  }

  try {
    const Command* cmd = nullptr;
    for (const Command* c : {occ_cmd.get(), fpr_cmd.get(), bf_cmd.get(), rev_cmd.get(), pp_cmd.get(), syn_cmd.get()})
      if (c->app->parsed()) cmd = c;
    const ConfigMap cfg = resolve(*cmd);
    const ExperimentName name = parse_experiment_name(cmd->app->get_name());

    std::unique_ptr<std::ofstream> file;
    if (!cmd->out_path.empty()) {
      file = std::make_unique<std::ofstream>(cmd->out_path);
      if (!*file) throw std::runtime_error("cannot write " + cmd->out_path);
    }
    std::ostream& csv = file ? static_cast<std::ostream&>(*file) : std::cout;
    std::ostream& info = file ? std::cout : std::cerr;

    switch (name) {
      case ExperimentName::Occupancy: {
        OccupancyParams p;
        apply_config(cfg, p.filter);
        p.seed = seed_of(cfg);
        if (auto v = cfg.get_list("experiment.mnk_list")) p.mnk_list = *v;
        if (auto v = cfg.get_u64("experiment.insertions")) p.insertions = *v;
        if (auto v = cfg.get_u64("experiment.sample_every")) p.sample_every = *v;
        if (auto v = cfg.get_u64("experiment.trials")) p.trials = *v;
        const auto curves = run_occupancy(p);
        occupancy_report(curves).write(csv);
        for (const auto& c : curves) {
          info << "mnk=" << c.mnk << " final occupancy="
               << format_decimal(c.samples.empty() ? 0.0 : c.samples.back().second);
          if (c.mean_first_full) info << " full after " << format_decimal(*c.mean_first_full);
          info << '\n';
        }
        break;
      }
      case ExperimentName::Fpr: {
        FprParams p;
        apply_config(cfg, p.filter);
        p.seed = seed_of(cfg);
        if (auto v = cfg.get_list("experiment.f_list")) p.f_list = *v;
        if (auto v = cfg.get_u64("experiment.insertions")) p.insertions = *v;
        if (auto v = cfg.get_u64("experiment.snapshots")) p.snapshots = *v;
        const auto points = run_fpr(p);
        fpr_report(points).write(csv);
        for (const auto& pt : points)
          info << "f=" << pt.f << " collision ratio=" << format_decimal(pt.collision_entry_ratio)
               << " (age model " << format_decimal(pt.age_predicted_ratio)
               << ") eps=" << format_decimal(pt.theoretical_eps) << '\n';
        break;
      }
      case ExperimentName::BruteForce: {
        BruteForceParams p;
        apply_config(cfg, p.filter);
        p.seed = seed_of(cfg);
        if (auto v = cfg.get_u64("experiment.trials")) p.trials = *v;
        if (auto v = cfg.get_u64("experiment.warmup")) p.warmup = *v;
        const auto o = run_brute_force(p);
        brute_force_report(o).write(csv);
        print_summary(info, "fills", o.summary);
        info << "theoretical b*l=" << format_decimal(o.expected)
             << " cv=" << format_decimal(o.coefficient_of_variation) << '\n';
        break;
      }
      case ExperimentName::Reverse: {
        ReverseParams p;
        apply_config(cfg, p.filter);
        p.seed = seed_of(cfg);
        if (auto v = cfg.get_list("experiment.mnk_list")) p.mnk_list = *v;
        if (auto v = cfg.get_u64("experiment.trials")) p.trials = *v;
        if (auto v = cfg.get_double("experiment.threshold")) p.success_threshold = *v;
        if (cmd->search) {
          const auto rows = run_reverse_search(p);
          reverse_search_report(p.filter.entries_per_bucket, rows).write(csv);
          for (const auto& r : rows) {
            info << "mnk=" << r.mnk << " planned=" << r.planned_size << " minimal=";
            if (r.search.minimal_size)
              info << *r.search.minimal_size;
            else
              info << "none";
            info << '\n';
          }
        } else {
          const auto rows = run_reverse(p);
          reverse_report(rows).write(csv);
          for (const auto& r : rows)
            info << "mnk=" << r.mnk << " eviction set=" << r.report.eviction_set_size_used
                 << " fills=" << r.report.fills_issued
                 << (r.report.materialized ? (r.report.success ? " evicted" : " not evicted")
                                           : " (tree exceeds the filter; plan only)")
                 << '\n';
        }
        break;
      }
      case ExperimentName::PrimeProbe: {
        PrimeProbeParams p;
        apply_config(cfg, p.geometry);
        apply_config(cfg, p.monitor);
        p.seed = seed_of(cfg);
        if (auto v = cfg.get_u64("attack.key_bits")) p.key_bits = *v;
        if (auto v = cfg.get_u64("attack.probe_period")) p.probe_period = *v;
        if (auto v = cfg.get("attack.monitor")) {
          if (*v == "on") p.monitor_modes = {true};
          else if (*v == "off") p.monitor_modes = {false};
          else if (*v != "both") throw std::runtime_error("--monitor must be on, off or both");
        }
        const auto runs = run_primeprobe(p);
        primeprobe_report(runs).write(csv);
        for (const auto& r : runs)
          info << "monitor " << (r.monitor ? "on " : "off") << " accuracy="
               << format_decimal(r.result.key.accuracy)
               << " captures=" << r.result.monitor_stats.captures
               << " prefetches=" << r.result.prefetches_installed << '\n';
        break;
      }
      case ExperimentName::Synthetic: {
        SyntheticParams p;
        apply_config(cfg, p.geometry);
        apply_config(cfg, p.monitor);
        p.seed = seed_of(cfg);
        if (auto v = cfg.get_u64("experiment.accesses")) p.accesses = *v;
        if (auto v = cfg.get("experiment.workloads")) {
          p.workloads.clear();
          std::stringstream ss(*v);
          std::string item;
          while (std::getline(ss, item, ',')) p.workloads.push_back(parse_workload(item));
        }
        const auto rows = run_synthetic(p);
        synthetic_report(rows).write(csv);
        for (const auto& r : rows)
          info << to_string(r.workload) << ": captures=" << r.captures
               << " memory accesses=" << r.memory_accesses
               << " prefetches=" << r.prefetches_issued << '\n';
        break;
      }
    }
    if (file && !file->flush()) throw std::runtime_error("write failed: " + cmd->out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
