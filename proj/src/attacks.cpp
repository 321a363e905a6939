#include "pipo/attacks.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace pipo {

namespace {

// Background traffic lives above bit 50 so it never aliases attacker lines.
constexpr Address kBackgroundBit = Address{1} << 50;
constexpr Address kAttackerMask = (Address{1} << 40) - 1;
// Attacker lines used only to push eviction-set lines out of its own L1/L2.
constexpr Address kFlushRegion = Address{1} << 44;

Address random_line(std::mt19937_64& rng, Address mask) { return (rng() & mask) << kLineOffsetBits; }

std::uint64_t saturating_pow(std::uint64_t base, unsigned exp) {
  std::uint64_t r = 1;
  for (unsigned i = 0; i < exp; ++i) {
    if (base != 0 && r > UINT64_MAX / base) return UINT64_MAX;
    r *= base;
  }
  return r;
}

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
  return a > UINT64_MAX - b ? UINT64_MAX : a + b;
}

}  // namespace

std::vector<Address> SquareMultiplyVictim::schedule(std::size_t iteration) const {
  if (secret_bits.at(iteration)) return {square_addr, multiply_addr};
  return {multiply_addr};
}

std::vector<Address> build_eviction_set(Address target, const CacheGeometry& geometry,
                                        Address address_limit) {
  const Address stride = Address{geometry.llc.sets()} * kLineSize;
  const Address base = (line_of(target) / kLineSize % geometry.llc.sets()) * kLineSize;
  std::vector<Address> out;
  for (Address a = base; a < address_limit && out.size() < geometry.llc.ways; a += stride)
    if (a != line_of(target)) out.push_back(a);
  if (out.size() < geometry.llc.ways)
    throw std::length_error("eviction set: address range holds only " +
                            std::to_string(out.size()) + " congruent lines, need " +
                            std::to_string(geometry.llc.ways));
  return out;
}

std::vector<Address> build_private_flush_set(Address target, const CacheGeometry& geometry,
                                             const std::vector<Address>& avoid) {
  const std::uint32_t l2_sets = geometry.l2.sets();
  const std::uint32_t llc_sets = geometry.llc.sets();
  if (geometry.l1.sets() > l2_sets || l2_sets >= llc_sets)
    throw std::invalid_argument("flush set: needs L1 sets <= L2 sets < LLC sets");
  const CacheHierarchy index(geometry);
  const Address stride = Address{l2_sets} * kLineSize;
  const std::uint32_t need = std::max(geometry.l1.ways, geometry.l2.ways);
  std::vector<Address> out;
  for (Address a = kFlushRegion + (line_of(target) % stride); out.size() < need; a += stride) {
    const std::uint32_t set = index.build_set_index(a, Level::LLC);
    bool clash = set == index.build_set_index(target, Level::LLC);
    for (Address v : avoid) clash = clash || set == index.build_set_index(v, Level::LLC);
    if (!clash) out.push_back(a);
  }
  return out;
}

std::uint32_t default_miss_threshold(const CacheGeometry& geometry) {
  return (geometry.llc.latency + geometry.memory_latency()) / 2;
}

double key_accuracy(const std::vector<bool>& inferred, const std::vector<bool>& truth) {
  if (inferred.size() != truth.size())
    throw std::invalid_argument("key accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t match = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) match += inferred[i] == truth[i];
  return static_cast<double>(match) / static_cast<double>(truth.size());
}

PrimeProbeResult run_prime_probe(const PrimeProbeScenario& sc) {
  const std::uint32_t cores = sc.geometry.cores;
  if (sc.attacker_core >= cores || sc.victim_core >= cores || sc.attacker_core == sc.victim_core)
    throw std::invalid_argument("prime+probe: attacker and victim need distinct valid cores");
  Simulator sim(sc.geometry, sc.monitor);
  const std::uint32_t threshold =
      sc.miss_threshold ? sc.miss_threshold : default_miss_threshold(sc.geometry);
  const std::array<Address, 2> targets{line_of(sc.victim.square_addr),
                                       line_of(sc.victim.multiply_addr)};
  const std::array<std::vector<Address>, 2> sets{build_eviction_set(targets[0], sc.geometry),
                                                 build_eviction_set(targets[1], sc.geometry)};
  const std::vector<Address> both{targets[0], targets[1]};
  const std::array<std::vector<Address>, 2> flush{
      build_private_flush_set(targets[0], sc.geometry, both),
      build_private_flush_set(targets[1], sc.geometry, both)};

  std::size_t log_seen = 0;
  auto prefetched_since = [&](Address target) {
    bool hit = false;
    if (const PiPoMonitor* m = sim.monitor()) {
      const auto& ev = m->log().events();
      for (std::size_t i = log_seen; i < ev.size(); ++i)
        hit |= ev[i].kind == EventKind::Prefetch && ev[i].addr == target &&
               ev[i].detail == "installed";
    }
    return hit;
  };

  // Agents issue dependent accesses back to back; the two streams are merged
  // in cycle order, the attacker first on ties.
  struct Agent {
    std::uint32_t core;
    std::vector<Address> queue;
    std::size_t next = 0;
    Cycle ready = 0;
    bool done() const { return next >= queue.size(); }
  };

  const std::size_t n = sc.victim.secret_bits.size();
  PrimeProbeResult res;
  res.trace.iterations.resize(n);
  // Pass p primes window p and probes the bit the victim ran in window p-1.
  // Cold prime; windows start once it has finished.
  Cycle origin = 0;
  for (int k = 0; k < 2; ++k) {
    for (Address a : flush[k]) origin += sim.access(sc.attacker_core, a, origin).latency;
    for (Address a : sets[k]) origin += sim.access(sc.attacker_core, a, origin).latency;
  }
  origin = (origin / sc.probe_period + 1) * sc.probe_period;
  Cycle attacker_free = origin;
  Cycle victim_free = origin;
  for (std::size_t p = 0; p <= n; ++p) {
    const Cycle window = origin + static_cast<Cycle>(p) * sc.probe_period;
    Agent attacker{sc.attacker_core, {}, 0, std::max(window, attacker_free)};
    // Queue entries tagged with the target they probe, -1 for flush lines.
    std::vector<int> probes;
    for (int k = 0; k < 2; ++k) {
      std::vector<Address> order = sets[k];
      if (p % 2 == 1) std::reverse(order.begin(), order.end());
      attacker.queue.insert(attacker.queue.end(), flush[k].begin(), flush[k].end());
      probes.insert(probes.end(), flush[k].size(), -1);
      attacker.queue.insert(attacker.queue.end(), order.begin(), order.end());
      probes.insert(probes.end(), order.size(), k);
    }
    Agent victim{sc.victim_core, {}, 0, std::max(window + sc.probe_period / 2, victim_free)};
    if (p < n) victim.queue = sc.victim.schedule(p);

    std::array<bool, 2> missed{false, false};
    while (!attacker.done() || !victim.done()) {
      const bool attacker_turn =
          !attacker.done() && (victim.done() || attacker.ready <= victim.ready);
      Agent& a = attacker_turn ? attacker : victim;
      if (attacker_turn && attacker.next == 0 && p > 0) {
        // State the probe is about to measure.
        sim.advance(attacker.ready);
        auto& sample = res.trace.iterations[p - 1];
        for (int k = 0; k < 2; ++k) {
          sample[k].prefetch_installed = prefetched_since(targets[k]);
          sample[k].target_resident = sim.cache().llc_contains(targets[k]);
        }
        if (sim.monitor()) log_seen = sim.monitor()->log().events().size();
      }
      const AccessResult r = sim.access(a.core, a.queue[a.next], a.ready);
      if (attacker_turn) {
        const int k = probes[attacker.next];
        if (k >= 0) missed[k] = missed[k] || r.latency > threshold;
      }
      ++a.next;
      a.ready += r.latency;
    }
    attacker_free = attacker.ready;
    victim_free = victim.ready;

    if (p > 0) {
      auto& sample = res.trace.iterations[p - 1];
      sample[0].observed_miss = missed[0];
      sample[1].observed_miss = missed[1];
      sample[0].victim_accessed = sc.victim.secret_bits[p - 1];
      sample[1].victim_accessed = true;
      res.key.inferred_bits.push_back(missed[0]);
    }
  }
  res.key.true_bits = sc.victim.secret_bits;
  res.key.accuracy = key_accuracy(res.key.inferred_bits, res.key.true_bits);
  if (const PiPoMonitor* m = sim.monitor()) {
    res.monitor_stats = m->stats();
    res.events = m->log();
  }
  res.prefetches_installed = sim.prefetches_installed();
  return res;
}

BruteForceResult run_brute_force_evict(AutoCuckooFilter& filter, Address target,
                                       std::mt19937_64& rng, std::uint64_t max_fills) {
  target = line_of(target);
  if (!filter.contains(target))
    throw std::invalid_argument("brute force: target " + hex_address(target) + " is not recorded");
  BruteForceResult r;
  while (r.fills < max_fills) {
    Address a;
    do a = random_line(rng, (Address{1} << 57) - 1);
    while (a == target);
    filter.query_and_update(a);
    ++r.fills;
    if (!filter.contains(target)) {
      r.evicted = true;
      break;
    }
  }
  return r;
}

EvictionTreePlan plan_eviction_tree(const FilterConfig& config) {
  config.validate();
  EvictionTreePlan p;
  p.b = config.entries_per_bucket;
  p.mnk = config.max_kicks;
  p.eviction_set_size = saturating_pow(p.b, p.mnk + 1);
  for (unsigned k = 1; k < p.mnk; ++k)
    p.routing_records = saturating_add(p.routing_records, saturating_pow(p.b, k + 1));
  p.buckets_needed = 2;
  for (unsigned k = 1; k <= p.mnk; ++k)
    p.buckets_needed = saturating_add(p.buckets_needed, saturating_pow(p.b, k));
  p.fits = p.buckets_needed <= config.buckets;
  return p;
}

EvictionTree build_eviction_tree(const FilterConfig& config, Address target,
                                 std::uint64_t search_seed) {
  const EvictionTreePlan plan = plan_eviction_tree(config);
  if (!plan.fits)
    throw std::invalid_argument("eviction tree: needs " + std::to_string(plan.buckets_needed) +
                                " buckets, filter has " + std::to_string(config.buckets));
  const FilterHasher h(config);
  EvictionTree tree;
  tree.target = line_of(target);
  const auto [t, t_alt] = h.candidate_buckets(tree.target);
  if (t == t_alt) throw std::invalid_argument("eviction tree: target buckets coincide");
  tree.target_bucket = t;

  std::mt19937_64 rng(search_seed);
  std::vector<bool> used(config.buckets, false);
  used[t] = used[t_alt] = true;
  tree.nodes.push_back({t});
  std::map<BucketIndex, BucketIndex> parent;
  for (unsigned k = 1; k <= plan.mnk; ++k) {
    std::vector<BucketIndex> level;
    for (BucketIndex p : tree.nodes.back()) {
      for (std::uint32_t i = 0; i < plan.b; ++i) {
        BucketIndex c;
        do c = static_cast<BucketIndex>(rng() % config.buckets);
        while (used[c]);
        used[c] = true;
        parent[c] = p;
        level.push_back(c);
      }
    }
    tree.nodes.push_back(std::move(level));
  }

  // Every node needs b records whose primary bucket is the node and whose
  // alternate is its parent. Leaves of a kick-free tree only need the
  // target's bucket as primary.
  std::map<BucketIndex, std::vector<Address>> found;
  std::size_t missing = 0;
  for (unsigned k = plan.mnk == 0 ? 0 : 1; k <= plan.mnk; ++k) missing += tree.nodes[k].size() * plan.b;
  std::unordered_set<Address> seen{tree.target};
  while (missing > 0) {
    const Address a = random_line(rng, kAttackerMask);
    if (!seen.insert(a).second) continue;
    const auto [mu, sigma] = h.candidate_buckets(a);
    bool wanted;
    if (plan.mnk == 0)
      wanted = mu == t && sigma != t && sigma != t_alt;
    else
      wanted = mu != t && mu != t_alt && parent.count(mu) && parent[mu] == sigma;
    if (!wanted || found[mu].size() >= plan.b) continue;
    found[mu].push_back(a);
    --missing;
  }

  for (unsigned k = 1; k < plan.mnk; ++k) {
    std::vector<Address> level;
    for (BucketIndex n : tree.nodes[k]) level.insert(level.end(), found[n].begin(), found[n].end());
    tree.routing.push_back(std::move(level));
  }
  for (BucketIndex n : tree.nodes[plan.mnk])
    tree.leaves.insert(tree.leaves.end(), found[n].begin(), found[n].end());
  return tree;
}

namespace {

std::uint64_t default_warmup(const FilterConfig& c) {
  return 4ull * c.buckets * c.entries_per_bucket;
}

// Background traffic, then the target, then the routing records.
AutoCuckooFilter prepare_filter(const FilterConfig& config, const EvictionTree& tree,
                                std::uint64_t seed, std::uint64_t warmup) {
  FilterConfig c = config;
  c.rng_seed = mix64(seed, 0x7265'7665'7273'6501ULL);
  AutoCuckooFilter f(c);
  std::mt19937_64 bg(mix64(seed, 0x6267'0000'0000'0001ULL));
  for (std::uint64_t i = 0; i < warmup; ++i)
    f.query_and_update(kBackgroundBit | random_line(bg, kAttackerMask));
  f.query_and_update(tree.target);
  for (const auto& level : tree.routing)
    for (Address a : level) f.query_and_update(a);
  return f;
}

ReverseAttackReport drive_fills(AutoCuckooFilter& f, const EvictionTree& tree,
                                const std::vector<Address>& set, std::uint64_t budget) {
  ReverseAttackReport r;
  r.materialized = true;
  r.eviction_set_size_used = set.size();
  for (std::size_t i = 0; r.fills_issued < budget && !set.empty(); ++i) {
    if (!f.contains(tree.target)) break;
    f.query_and_update(set[i % set.size()]);
    ++r.fills_issued;
  }
  r.success = !f.contains(tree.target);
  return r;
}

std::vector<Address> select_leaves(const EvictionTree& tree, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return tree.leaves;
  std::vector<Address> out;
  for (std::size_t i : idx) out.push_back(tree.leaves.at(i));
  return out;
}

}  // namespace

ReverseAttackReport run_reverse_attack(const FilterConfig& config, Address target,
                                       const ReverseAttackOptions& options) {
  const EvictionTreePlan plan = plan_eviction_tree(config);
  if (!plan.fits) {
    ReverseAttackReport r;
    r.eviction_set_size_used = plan.eviction_set_size;
    return r;
  }
  const EvictionTree tree = build_eviction_tree(config, target, mix64(options.seed, 0x7472'6565));
  return run_reverse_attack(config, tree, options);
}

ReverseAttackReport run_reverse_attack(const FilterConfig& config, const EvictionTree& tree,
                                       const ReverseAttackOptions& options) {
  const EvictionTreePlan plan = plan_eviction_tree(config);
  const std::uint64_t budget = options.budget ? options.budget : 10 * plan.eviction_set_size;
  const std::uint64_t warmup =
      options.warmup_insertions ? options.warmup_insertions : default_warmup(config);
  AutoCuckooFilter f = prepare_filter(config, tree, options.seed, warmup);
  return drive_fills(f, tree, select_leaves(tree, options.leaf_subset), budget);
}

EvictionSetSearch search_minimal_eviction_set(const FilterConfig& config, Address target,
                                              std::size_t trials, double success_threshold,
                                              std::uint64_t seed) {
  const EvictionTree tree = build_eviction_tree(config, target, mix64(seed, 0x7472'6565));
  const std::size_t n = tree.leaves.size();
  if (n > 20) throw std::invalid_argument("eviction set search: too many leaves");
  const std::uint64_t budget = 10 * plan_eviction_tree(config).eviction_set_size;

  std::vector<AutoCuckooFilter> prepared;
  prepared.reserve(trials);
  for (std::size_t s = 0; s < trials; ++s)
    prepared.push_back(prepare_filter(config, tree, seed + 1 + s, default_warmup(config)));

  EvictionSetSearch out;
  out.by_size.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.by_size[k].size = k + 1;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    std::vector<Address> set;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) set.push_back(tree.leaves[i]);
    std::size_t wins = 0;
    for (const AutoCuckooFilter& base : prepared) {
      AutoCuckooFilter f = base;
      wins += drive_fills(f, tree, set, budget).success;
    }
    SubsetSizeOutcome& o = out.by_size[set.size() - 1];
    ++o.subsets;
    o.best_success_rate =
        std::max(o.best_success_rate, static_cast<double>(wins) / static_cast<double>(trials));
  }
  for (const SubsetSizeOutcome& o : out.by_size)
    if (o.best_success_rate >= success_threshold) {
      out.minimal_size = o.size;
      break;
    }
  return out;
}

}  // namespace pipo
