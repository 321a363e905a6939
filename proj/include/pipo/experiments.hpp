#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pipo/attacks.hpp"
#include "pipo/cachesim.hpp"
#include "pipo/filter.hpp"
#include "pipo/monitor.hpp"

namespace pipo {

// ---------------------------------------------------------------------------
// Reporting

class CsvReport {
 public:
  explicit CsvReport(std::vector<std::string> header);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  // Throws std::invalid_argument when the width differs from the header.
  void add_row(std::vector<std::string> row);
  void write(std::ostream& os) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Fixed six-decimal rendering so reruns are byte-identical.
std::string format_decimal(double v);

struct Summary {
  double mean = 0, stddev = 0, min = 0, max = 0;
  std::size_t count = 0;
};

// Sample standard deviation (n-1); zeros for empty input.
Summary summarize(const std::vector<double>& values);

// ---------------------------------------------------------------------------
// key=value configuration

// One `key = value` per line; '#' starts a comment. Unknown keys, missing '='
// and duplicates throw std::runtime_error naming the line.
class ConfigMap {
 public:
  static ConfigMap parse(std::istream& in);
  static ConfigMap load(const std::string& path);
  static const std::vector<std::string>& known_keys();

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  // Typed getters throw std::runtime_error on unparsable values.
  std::optional<std::uint64_t> get_u64(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<std::vector<unsigned>> get_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

 private:
  std::map<std::string, std::string> values_;
};

std::vector<unsigned> parse_unsigned_list(const std::string& text);

void apply_config(const ConfigMap& c, FilterConfig& f);
void apply_config(const ConfigMap& c, MonitorConfig& m);
void apply_config(const ConfigMap& c, CacheGeometry& g);

enum class ExperimentName { Occupancy, Fpr, BruteForce, Reverse, PrimeProbe, Synthetic };

// Throws std::invalid_argument for unknown names.
ExperimentName parse_experiment_name(const std::string& name);
const char* to_string(ExperimentName n);

// ---------------------------------------------------------------------------
// Occupancy

struct OccupancyParams {
  FilterConfig filter{};
  std::vector<unsigned> mnk_list{2, 4, 8};
  std::uint64_t insertions = 14000;
  std::uint64_t sample_every = 500;
  std::uint64_t trials = 1;
  std::uint64_t seed = 1;
};

struct OccupancyCurve {
  unsigned mnk = 0;
  std::vector<std::pair<std::uint64_t, double>> samples;  // (insertions, mean occupancy)
  // Mean over trials of the first insertion count at full occupancy; empty if
  // some trial never filled.
  std::optional<double> mean_first_full;
};

// Every mnk sees the same address streams. Rows: mnk,insertions,occupancy.
std::vector<OccupancyCurve> run_occupancy(const OccupancyParams& p);
CsvReport occupancy_report(const std::vector<OccupancyCurve>& curves);

// ---------------------------------------------------------------------------
// Fingerprint collisions

struct FprParams {
  FilterConfig filter = [] {
    FilterConfig c;
    c.buckets = 16;
    return c;
  }();
  std::vector<unsigned> f_list{8, 10, 12, 14, 16};
  std::uint64_t insertions = 100000;
  // Ratios are averaged over this many snapshots spread over the second half.
  std::uint64_t snapshots = 64;
  std::uint64_t seed = 1;
};

struct FprPoint {
  unsigned f = 0;
  double collision_entry_ratio = 0;  // entries holding >= 2 distinct addresses
  double multi_collision_ratio = 0;  // entries holding > 2
  double theoretical_eps = 0;
  // Expected collision ratio given the measured record ages:
  // mean of 1 - exp(-2 * age / (l * 2^f)) over valid records.
  double age_predicted_ratio = 0;
};

// Each insertion is a fresh address, so every merge is a collision.
// Rows: f,collision_entry_ratio,multi_collision_ratio,theoretical_eps.
std::vector<FprPoint> run_fpr(const FprParams& p);
CsvReport fpr_report(const std::vector<FprPoint>& points);

// ---------------------------------------------------------------------------
// Brute force

struct BruteForceParams {
  FilterConfig filter{};
  std::uint64_t trials = 200;
  std::uint64_t warmup = 0;  // 0: 2 * l * b fresh insertions before the target
  std::uint64_t seed = 1;
};

struct BruteForceOutcome {
  std::vector<std::uint64_t> fills;
  Summary summary;
  double coefficient_of_variation = 0;
  double expected = 0;  // b * l
};

// Fresh filter per trial. Rows: trial,fills.
BruteForceOutcome run_brute_force(const BruteForceParams& p);
CsvReport brute_force_report(const BruteForceOutcome& o);

// ---------------------------------------------------------------------------
// Reverse attack

struct ReverseParams {
  FilterConfig filter = [] {
    FilterConfig c;
    c.buckets = 64;
    c.entries_per_bucket = 2;
    c.fingerprint_bits = 8;
    return c;
  }();
  std::vector<unsigned> mnk_list{0, 1, 2};
  std::uint64_t seed = 1;
  std::uint64_t trials = 200;     // search only
  double success_threshold = 0.9;  // search only
};

struct ReverseRow {
  unsigned mnk = 0;
  EvictionTreePlan plan;
  ReverseAttackReport report;
};

// A target whose candidate buckets differ, drawn deterministically.
Address choose_reverse_target(const FilterConfig& config, std::uint64_t seed);

// Rows: b,mnk,eviction_set_size,fills_issued,success,materialized.
std::vector<ReverseRow> run_reverse(const ReverseParams& p);
CsvReport reverse_report(const std::vector<ReverseRow>& rows);

struct ReverseSearchRow {
  unsigned mnk = 0;
  std::uint64_t planned_size = 0;
  EvictionSetSearch search;
};

// Rows: b,mnk,subset_size,subsets,best_success_rate.
std::vector<ReverseSearchRow> run_reverse_search(const ReverseParams& p);
CsvReport reverse_search_report(std::uint32_t b, const std::vector<ReverseSearchRow>& rows);

// ---------------------------------------------------------------------------
// Prime+Probe

struct PrimeProbeParams {
  CacheGeometry geometry{};
  MonitorConfig monitor{};
  std::vector<bool> monitor_modes{false, true};
  std::uint64_t key_bits = 100;
  Cycle probe_period = 5000;
  std::uint64_t seed = 1;
  Address square_addr = 0x7f00'0000'1000ULL;
  Address multiply_addr = 0x7f00'0000'2040ULL;
};

std::vector<bool> random_key(std::uint64_t bits, std::uint64_t seed);

struct PrimeProbeRun {
  bool monitor = false;
  PrimeProbeResult result;
};

// Rows: monitor,iteration,true_bit,inferred_bit,square_miss,multiply_miss,
// prefetch_installed.
std::vector<PrimeProbeRun> run_primeprobe(const PrimeProbeParams& p);
CsvReport primeprobe_report(const std::vector<PrimeProbeRun>& runs);

// ---------------------------------------------------------------------------
// Synthetic benign workloads

enum class Workload { Streaming, HotSetFits, Thrash, Uniform };

const char* to_string(Workload w);
Workload parse_workload(const std::string& name);

// Scaled-down hierarchy whose LLC (4096 lines) is smaller than the filter's
// 8192 records, so LLC thrashing is visible to the monitor.
CacheGeometry desk_geometry();

struct SyntheticParams {
  CacheGeometry geometry = desk_geometry();
  MonitorConfig monitor{};
  std::vector<Workload> workloads{Workload::Streaming, Workload::HotSetFits, Workload::Thrash,
                                  Workload::Uniform};
  std::uint64_t accesses = 1'000'000;
  std::uint64_t seed = 1;
};

struct SyntheticRow {
  Workload workload = Workload::Streaming;
  std::uint64_t accesses = 0;
  std::uint64_t memory_accesses = 0;
  std::uint64_t captures = 0;
  std::uint64_t prefetches_issued = 0;
  double captures_per_million_accesses = 0;
};

// Streaming touches every line once; hot-set-fits loops over half the LLC;
// thrash walks 1.5x the LLC cyclically; uniform draws from 4x the LLC.
// Rows: workload,captures_per_million_accesses,prefetches_issued.
std::vector<SyntheticRow> run_synthetic(const SyntheticParams& p);
CsvReport synthetic_report(const std::vector<SyntheticRow>& rows);

}  // namespace pipo
