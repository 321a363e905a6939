#include "pipo/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace pipo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string u64(std::uint64_t v) { return std::to_string(v); }

Address random_line(std::mt19937_64& rng) {
  return (rng() & ((Address{1} << 56) - 1)) << kLineOffsetBits;
}

}  // namespace

// ---------------------------------------------------------------------------

CsvReport::CsvReport(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvReport::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size())
    throw std::invalid_argument("csv: row has " + std::to_string(row.size()) +
                                " columns, header has " + std::to_string(header_.size()));
  rows_.push_back(std::move(row));
}

void CsvReport::write(std::ostream& os) const {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
}

std::string format_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& ConfigMap::known_keys() {
  static const std::vector<std::string> keys = {
      "filter.buckets", "filter.entries", "filter.fingerprint_bits", "filter.mnk",
      "filter.sec_thr", "filter.rng_seed", "filter.hash_seed",
      "monitor.prefetch_delay",
      "cache.l1.size", "cache.l1.ways", "cache.l1.latency",
      "cache.l2.size", "cache.l2.ways", "cache.l2.latency",
      "cache.llc.size", "cache.llc.ways", "cache.llc.latency",
      "cache.dram_latency", "cache.cores",
      "attack.key_bits", "attack.probe_period", "attack.monitor",
      "experiment.seed", "experiment.trials", "experiment.insertions",
      "experiment.sample_every", "experiment.mnk_list", "experiment.f_list",
      "experiment.warmup", "experiment.snapshots", "experiment.accesses",
      "experiment.workloads", "experiment.threshold"};
  return keys;
}

ConfigMap ConfigMap::parse(std::istream& in) {
  ConfigMap c;
  const auto& known = known_keys();
  std::string text;
  for (std::size_t lineno = 1; std::getline(in, text); ++lineno) {
    const std::string body = trim(text.substr(0, text.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw std::runtime_error(where + "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty() || value.empty()) throw std::runtime_error(where + "empty key or value");
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::runtime_error(where + "unknown key '" + key + "'");
    if (!c.values_.emplace(key, value).second)
      throw std::runtime_error(where + "duplicate key '" + key + "'");
  }
  return c;
}

ConfigMap ConfigMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse(in);
}

std::optional<std::string> ConfigMap::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint64_t> ConfigMap::get_u64(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  try {
    std::size_t used = 0;
    if (!v->empty() && v->front() == '-') throw std::invalid_argument(*v);
    const std::uint64_t r = std::stoull(*v, &used, 0);
    if (used != v->size()) throw std::invalid_argument(*v);
    return r;
  } catch (const std::exception&) {
    throw std::runtime_error("config: '" + key + "' is not an unsigned integer: " + *v);
  }
}

std::optional<double> ConfigMap::get_double(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  try {
    std::size_t used = 0;
    const double r = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return r;
  } catch (const std::exception&) {
    throw std::runtime_error("config: '" + key + "' is not a number: " + *v);
  }
}

std::optional<std::vector<unsigned>> ConfigMap::get_list(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  try {
    return parse_unsigned_list(*v);
  } catch (const std::exception& e) {
    throw std::runtime_error("config: '" + key + "': " + e.what());
  }
}

void ConfigMap::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::vector<unsigned> parse_unsigned_list(const std::string& text) {
  std::vector<unsigned> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("bad list element '" + item + "'");
    out.push_back(static_cast<unsigned>(std::stoul(item)));
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

void apply_config(const ConfigMap& c, FilterConfig& f) {
  if (auto v = c.get_u64("filter.buckets")) f.buckets = static_cast<std::uint32_t>(*v);
  if (auto v = c.get_u64("filter.entries")) f.entries_per_bucket = static_cast<std::uint32_t>(*v);
  if (auto v = c.get_u64("filter.fingerprint_bits")) f.fingerprint_bits = static_cast<unsigned>(*v);
  if (auto v = c.get_u64("filter.mnk")) f.max_kicks = static_cast<unsigned>(*v);
  if (auto v = c.get_u64("filter.sec_thr")) f.sec_thr = static_cast<unsigned>(*v);
  if (auto v = c.get_u64("filter.rng_seed")) f.rng_seed = *v;
  if (auto v = c.get_u64("filter.hash_seed")) f.hash_seed = *v;
}

void apply_config(const ConfigMap& c, MonitorConfig& m) {
  if (auto v = c.get_u64("monitor.prefetch_delay")) m.prefetch_delay = *v;
  apply_config(c, m.filter);
}

void apply_config(const ConfigMap& c, CacheGeometry& g) {
  const std::pair<const char*, LevelGeometry*> levels[] = {
      {"l1", &g.l1}, {"l2", &g.l2}, {"llc", &g.llc}};
  for (auto [name, lvl] : levels) {
    const std::string p = std::string("cache.") + name + ".";
    if (auto v = c.get_u64(p + "size")) lvl->size_bytes = *v;
    if (auto v = c.get_u64(p + "ways")) lvl->ways = static_cast<std::uint32_t>(*v);
    if (auto v = c.get_u64(p + "latency")) lvl->latency = static_cast<std::uint32_t>(*v);
  }
  if (auto v = c.get_u64("cache.dram_latency")) g.dram_latency = static_cast<std::uint32_t>(*v);
  if (auto v = c.get_u64("cache.cores")) g.cores = static_cast<std::uint32_t>(*v);
}

ExperimentName parse_experiment_name(const std::string& name) {
  for (ExperimentName n : {ExperimentName::Occupancy, ExperimentName::Fpr,
                           ExperimentName::BruteForce, ExperimentName::Reverse,
                           ExperimentName::PrimeProbe, ExperimentName::Synthetic})
    if (name == to_string(n)) return n;
  throw std::invalid_argument("unknown experiment '" + name + "'");
}

const char* to_string(ExperimentName n) {
  switch (n) {
    case ExperimentName::Occupancy: return "occupancy";
    case ExperimentName::Fpr: return "fpr";
    case ExperimentName::BruteForce: return "brute-force";
    case ExperimentName::Reverse: return "reverse";
    case ExperimentName::PrimeProbe: return "primeprobe";
    case ExperimentName::Synthetic: return "synthetic";
  }
  return "?";
}

// ---------------------------------------------------------------------------

std::vector<OccupancyCurve> run_occupancy(const OccupancyParams& p) {
  if (p.sample_every == 0 || p.trials == 0)
    throw std::invalid_argument("occupancy: sample interval and trials must be positive");
  std::vector<OccupancyCurve> curves;
  for (unsigned mnk : p.mnk_list) {
    FilterConfig cfg = p.filter;
    cfg.max_kicks = mnk;
    OccupancyCurve curve;
    curve.mnk = mnk;
    std::vector<double> sums;
    double first_full_sum = 0;
    bool all_full = true;
    for (std::uint64_t t = 0; t < p.trials; ++t) {
      cfg.rng_seed = mix64(p.seed, t);
      AutoCuckooFilter f(cfg);
      std::mt19937_64 rng(mix64(p.seed ^ 0x6f63'6375'7061'6e63ULL, t));
      std::unordered_set<Address> seen;
      std::optional<std::uint64_t> first_full;
      std::size_t k = 0;
      for (std::uint64_t i = 1; i <= p.insertions; ++i) {
        Address a;
        do a = random_line(rng);
        while (!seen.insert(a).second);
        f.query_and_update(a);
        if (!first_full && f.valid_count() == f.entries().size()) first_full = i;
        if (i % p.sample_every == 0) {
          if (k == sums.size()) sums.push_back(0);
          sums[k++] += f.occupancy();
        }
      }
      if (first_full)
        first_full_sum += static_cast<double>(*first_full);
      else
        all_full = false;
    }
    for (std::size_t k = 0; k < sums.size(); ++k)
      curve.samples.emplace_back((k + 1) * p.sample_every, sums[k] / static_cast<double>(p.trials));
    if (all_full) curve.mean_first_full = first_full_sum / static_cast<double>(p.trials);
    curves.push_back(std::move(curve));
  }
  return curves;
}

CsvReport occupancy_report(const std::vector<OccupancyCurve>& curves) {
  CsvReport r({"mnk", "insertions", "occupancy"});
  for (const auto& c : curves)
    for (const auto& [n, occ] : c.samples) r.add_row({u64(c.mnk), u64(n), format_decimal(occ)});
  return r;
}

// ---------------------------------------------------------------------------

std::vector<FprPoint> run_fpr(const FprParams& p) {
  if (p.snapshots == 0 || p.insertions < 2)
    throw std::invalid_argument("fpr: need at least one snapshot and two insertions");
  std::vector<FprPoint> out;
  for (unsigned f : p.f_list) {
    FilterConfig cfg = p.filter;
    cfg.fingerprint_bits = f;
    cfg.rng_seed = mix64(p.seed, f);
    AutoCuckooFilter filter(cfg);
    std::mt19937_64 rng(mix64(p.seed ^ 0x6670'7200'0000'0000ULL, f));

    struct Record {
      std::uint32_t addresses = 0;
      std::uint64_t born = 0;
    };
    std::unordered_map<RecordId, Record> records;
    const std::uint64_t half = p.insertions / 2;
    const std::uint64_t step = std::max<std::uint64_t>(1, (p.insertions - half) / p.snapshots);
    double coll = 0, multi = 0, predicted = 0;
    std::uint64_t taken = 0;
    const double per_insert = 2.0 / (static_cast<double>(cfg.buckets) * std::ldexp(1.0, f));

    for (std::uint64_t i = 1; i <= p.insertions; ++i) {
      const FilterResponse r = filter.query_and_update(random_line(rng));
      if (r.status == FilterStatus::Inserted)
        records[r.record] = {1, i};
      else
        ++records[r.record].addresses;
      if (r.evicted) records.erase(r.evicted->record);

      if (i > half && (i - half) % step == 0 && taken < p.snapshots) {
        std::size_t valid = 0, c2 = 0, c3 = 0;
        double pred = 0;
        for (const auto& [id, rec] : records) {
          ++valid;
          c2 += rec.addresses >= 2;
          c3 += rec.addresses > 2;
          pred += 1.0 - std::exp(-per_insert * static_cast<double>(i - rec.born));
        }
        coll += static_cast<double>(c2) / static_cast<double>(valid);
        multi += static_cast<double>(c3) / static_cast<double>(valid);
        predicted += pred / static_cast<double>(valid);
        ++taken;
      }
    }
    FprPoint pt;
    pt.f = f;
    pt.collision_entry_ratio = coll / static_cast<double>(taken);
    pt.multi_collision_ratio = multi / static_cast<double>(taken);
    pt.age_predicted_ratio = predicted / static_cast<double>(taken);
    pt.theoretical_eps = theoretical_fpr(cfg);
    out.push_back(pt);
  }
  return out;
}

CsvReport fpr_report(const std::vector<FprPoint>& points) {
  CsvReport r({"f", "collision_entry_ratio", "multi_collision_ratio", "theoretical_eps"});
  for (const auto& p : points)
    r.add_row({u64(p.f), format_decimal(p.collision_entry_ratio),
               format_decimal(p.multi_collision_ratio), format_decimal(p.theoretical_eps)});
  return r;
}

// ---------------------------------------------------------------------------

BruteForceOutcome run_brute_force(const BruteForceParams& p) {
  if (p.trials == 0) throw std::invalid_argument("brute force: trials must be positive");
  const std::uint64_t warmup =
      p.warmup ? p.warmup : 2ull * p.filter.buckets * p.filter.entries_per_bucket;
  BruteForceOutcome o;
  std::vector<double> values;
  for (std::uint64_t t = 0; t < p.trials; ++t) {
    FilterConfig cfg = p.filter;
    cfg.rng_seed = mix64(p.seed, t);
    AutoCuckooFilter f(cfg);
    std::mt19937_64 rng(mix64(p.seed ^ 0x6272'7574'6500'0000ULL, t));
    for (std::uint64_t i = 0; i < warmup; ++i) f.query_and_update(random_line(rng));
    // A kick chain can drop the freshly inserted target itself; the attack
    // starts from a recorded target, so draw again.
    Address target;
    do {
      do target = random_line(rng);
      while (f.contains(target));
      f.query_and_update(target);
    } while (!f.contains(target));
    const BruteForceResult r = run_brute_force_evict(f, target, rng);
    o.fills.push_back(r.fills);
    values.push_back(static_cast<double>(r.fills));
  }
  o.summary = summarize(values);
  o.coefficient_of_variation = o.summary.mean > 0 ? o.summary.stddev / o.summary.mean : 0;
  o.expected = static_cast<double>(p.filter.buckets) * p.filter.entries_per_bucket;
  return o;
}

CsvReport brute_force_report(const BruteForceOutcome& o) {
  CsvReport r({"trial", "fills"});
  for (std::size_t i = 0; i < o.fills.size(); ++i) r.add_row({u64(i), u64(o.fills[i])});
  return r;
}

// ---------------------------------------------------------------------------

Address choose_reverse_target(const FilterConfig& config, std::uint64_t seed) {
  const FilterHasher h(config);
  std::mt19937_64 rng(mix64(seed, 0x7461'7267'6574));
  for (;;) {
    const Address a = (Address{1} << 45) | ((rng() & 0xffff'ffffULL) << kLineOffsetBits);
    const auto [mu, sigma] = h.candidate_buckets(a);
    if (mu != sigma) return a;
  }
}

std::vector<ReverseRow> run_reverse(const ReverseParams& p) {
  std::vector<ReverseRow> rows;
  for (unsigned mnk : p.mnk_list) {
    FilterConfig cfg = p.filter;
    cfg.max_kicks = mnk;
    ReverseRow row;
    row.mnk = mnk;
    row.plan = plan_eviction_tree(cfg);
    ReverseAttackOptions opt;
    opt.seed = p.seed;
    row.report = run_reverse_attack(cfg, choose_reverse_target(cfg, p.seed), opt);
    rows.push_back(row);
  }
  return rows;
}

CsvReport reverse_report(const std::vector<ReverseRow>& rows) {
  CsvReport r({"b", "mnk", "eviction_set_size", "fills_issued", "success", "materialized"});
  for (const auto& row : rows)
    r.add_row({u64(row.plan.b), u64(row.mnk), u64(row.report.eviction_set_size_used),
               u64(row.report.fills_issued), row.report.success ? "1" : "0",
               row.report.materialized ? "1" : "0"});
  return r;
}

std::vector<ReverseSearchRow> run_reverse_search(const ReverseParams& p) {
  std::vector<ReverseSearchRow> rows;
  for (unsigned mnk : p.mnk_list) {
    FilterConfig cfg = p.filter;
    cfg.max_kicks = mnk;
    ReverseSearchRow row;
    row.mnk = mnk;
    row.planned_size = plan_eviction_tree(cfg).eviction_set_size;
    row.search = search_minimal_eviction_set(cfg, choose_reverse_target(cfg, p.seed), p.trials,
                                             p.success_threshold, p.seed);
    rows.push_back(std::move(row));
  }
  return rows;
}

CsvReport reverse_search_report(std::uint32_t b, const std::vector<ReverseSearchRow>& rows) {
  CsvReport r({"b", "mnk", "subset_size", "subsets", "best_success_rate"});
  for (const auto& row : rows)
    for (const auto& o : row.search.by_size)
      r.add_row({u64(b), u64(row.mnk), u64(o.size), u64(o.subsets),
                 format_decimal(o.best_success_rate)});
  return r;
}

// ---------------------------------------------------------------------------

std::vector<bool> random_key(std::uint64_t bits, std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed, 0x6b65'79));
  std::vector<bool> key(bits);
  for (std::uint64_t i = 0; i < bits; ++i) key[i] = (rng() >> 63) != 0;
  return key;
}

std::vector<PrimeProbeRun> run_primeprobe(const PrimeProbeParams& p) {
  std::vector<PrimeProbeRun> runs;
  for (bool on : p.monitor_modes) {
    PrimeProbeScenario sc;
    sc.geometry = p.geometry;
    if (on) sc.monitor = p.monitor;
    sc.victim.secret_bits = random_key(p.key_bits, p.seed);
    sc.victim.square_addr = p.square_addr;
    sc.victim.multiply_addr = p.multiply_addr;
    sc.probe_period = p.probe_period;
    runs.push_back({on, run_prime_probe(sc)});
  }
  return runs;
}

CsvReport primeprobe_report(const std::vector<PrimeProbeRun>& runs) {
  CsvReport r({"monitor", "iteration", "true_bit", "inferred_bit", "square_miss", "multiply_miss",
               "prefetch_installed"});
  for (const auto& run : runs) {
    const auto& it = run.result.trace.iterations;
    for (std::size_t i = 0; i < it.size(); ++i)
      r.add_row({run.monitor ? "on" : "off", u64(i), run.result.key.true_bits[i] ? "1" : "0",
                 run.result.key.inferred_bits[i] ? "1" : "0", it[i][0].observed_miss ? "1" : "0",
                 it[i][1].observed_miss ? "1" : "0", it[i][0].prefetch_installed ? "1" : "0"});
  }
  return r;
}

// ---------------------------------------------------------------------------

const char* to_string(Workload w) {
  switch (w) {
    case Workload::Streaming: return "streaming";
    case Workload::HotSetFits: return "hot-set-fits";
    case Workload::Thrash: return "thrash";
    case Workload::Uniform: return "uniform";
  }
  return "?";
}

Workload parse_workload(const std::string& name) {
  for (Workload w :
       {Workload::Streaming, Workload::HotSetFits, Workload::Thrash, Workload::Uniform})
    if (name == to_string(w)) return w;
  throw std::invalid_argument("unknown workload '" + name + "'");
}

CacheGeometry desk_geometry() {
  CacheGeometry g;
  g.l1 = {4 * 1024, 4, 2};
  g.l2 = {16 * 1024, 8, 18};
  g.llc = {256 * 1024, 16, 35};
  return g;
}

std::vector<SyntheticRow> run_synthetic(const SyntheticParams& p) {
  std::vector<SyntheticRow> rows;
  const std::uint64_t llc_lines = p.geometry.llc.size_bytes / kLineSize;
  constexpr Address kBase = Address{1} << 36;
  for (Workload w : p.workloads) {
    Simulator sim(p.geometry, p.monitor);
    std::mt19937_64 rng(mix64(p.seed, static_cast<std::uint64_t>(w)));
    SyntheticRow row;
    row.workload = w;
    Cycle cycle = 0;
    for (std::uint64_t i = 0; i < p.accesses; ++i) {
      std::uint64_t line = 0;
      switch (w) {
        case Workload::Streaming: line = i; break;
        case Workload::HotSetFits: line = rng() % (llc_lines / 2); break;
        case Workload::Thrash: line = i % (llc_lines + llc_lines / 2); break;
        case Workload::Uniform: line = rng() % (4 * llc_lines); break;
      }
      const AccessResult r = sim.access(0, kBase + line * kLineSize, cycle);
      row.memory_accesses += r.memory_access;
      cycle += r.latency;
    }
    sim.advance(cycle + p.monitor.prefetch_delay);
    row.accesses = p.accesses;
    row.captures = sim.monitor()->stats().captures;
    row.prefetches_issued = sim.prefetches_installed();
    row.captures_per_million_accesses =
        p.accesses ? 1e6 * static_cast<double>(row.captures) / static_cast<double>(p.accesses) : 0;
    rows.push_back(row);
  }
  return rows;
}

CsvReport synthetic_report(const std::vector<SyntheticRow>& rows) {
  CsvReport r({"workload", "captures_per_million_accesses", "prefetches_issued"});
  for (const auto& row : rows)
    r.add_row({to_string(row.workload), format_decimal(row.captures_per_million_accesses),
               u64(row.prefetches_issued)});
  return r;
}

}  // namespace pipo
