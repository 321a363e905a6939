#include <gtest/gtest.h>

#include <random>
#include <set>

#include "pipo/attacks.hpp"
#include "pipo/experiments.hpp"

using namespace pipo;

namespace {

// Four 2-way LLC sets over 1-way private caches.
CacheGeometry toy_geometry() {
  CacheGeometry g;
  g.l1 = {64, 1, 2};
  g.l2 = {64, 1, 18};
  g.llc = {512, 2, 35};
  g.cores = 2;
  return g;
}

std::vector<bool> bits_from_seed(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<bool> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng() & 1;
  return v;
}

PrimeProbeScenario scenario(std::vector<bool> key, bool monitor) {
  PrimeProbeScenario s;
  if (monitor) s.monitor = MonitorConfig{};
  s.victim = {std::move(key), 0x7f00'0000'1000ULL, 0x7f00'0000'2040ULL};
  return s;
}

}  // namespace

TEST(Victim, ScheduleFollowsKeyBits) {
  const SquareMultiplyVictim v{{true, false}, 0x1000, 0x2000};
  EXPECT_EQ(v.schedule(0), (std::vector<Address>{0x1000, 0x2000}));
  EXPECT_EQ(v.schedule(1), (std::vector<Address>{0x2000}));
}

TEST(EvictionSet, CongruentDistinctLinesForDefaultLlc) {
  const CacheGeometry g;
  const CacheHierarchy c(g);
  const Address target = 0x7f00'0000'1000ULL;
  const auto set = build_eviction_set(target, g);
  ASSERT_EQ(set.size(), 16u);
  EXPECT_EQ(std::set<Address>(set.begin(), set.end()).size(), 16u);
  for (Address a : set) {
    EXPECT_NE(line_of(a), line_of(target));
    EXPECT_EQ(c.build_set_index(a, Level::LLC), c.build_set_index(target, Level::LLC));
  }
}

TEST(EvictionSet, ToyLlcSetThree) {
  const CacheGeometry g = toy_geometry();
  const CacheHierarchy c(g);
  const Address target = 3 * 64;
  const auto set = build_eviction_set(target, g);
  ASSERT_EQ(set.size(), 2u);
  for (Address a : set) EXPECT_EQ(c.build_set_index(a, Level::LLC), 3u);
}

TEST(EvictionSet, ThrowsWhenAddressSpaceTooSmall) {
  // [0, 512) holds only lines 3 and 7 in set 3; one of them is the target.
  EXPECT_THROW(build_eviction_set(3 * 64, toy_geometry(), 512), std::length_error);
  EXPECT_NO_THROW(build_eviction_set(3 * 64, toy_geometry(), 1024));
}

TEST(EvictionSet, PrimingEvictsVictimLine) {
  const CacheGeometry g;
  CacheHierarchy c(g);
  const Address target = 0x7f00'0000'1000ULL;
  c.access(1, target, 0);
  Cycle t = 1;
  for (Address a : build_eviction_set(target, g)) c.access(0, a, t++);
  EXPECT_FALSE(c.llc_contains(target));
  EXPECT_FALSE(c.contains(1, Level::L1, target));  // back-invalidated
  EXPECT_EQ(c.access(1, target, t).latency, g.memory_latency());
}

TEST(EvictionSet, PrivateFlushSetSharesPrivateSetsOnly) {
  const CacheGeometry g;
  const CacheHierarchy c(g);
  const Address target = 0x7f00'0000'1000ULL;
  const auto ev = build_eviction_set(target, g);
  const auto flush = build_private_flush_set(target, g, ev);
  ASSERT_EQ(flush.size(), g.l2.ways);
  for (Address a : flush) {
    EXPECT_EQ(c.build_set_index(a, Level::L1), c.build_set_index(target, Level::L1));
    EXPECT_EQ(c.build_set_index(a, Level::L2), c.build_set_index(target, Level::L2));
    EXPECT_NE(c.build_set_index(a, Level::LLC), c.build_set_index(target, Level::LLC));
  }
}

TEST(PrimeProbe, ThresholdIsMidpoint) {
  EXPECT_EQ(default_miss_threshold(CacheGeometry{}), 145u);
}

TEST(PrimeProbe, KeyAccuracy) {
  EXPECT_DOUBLE_EQ(key_accuracy({true, false, true, true}, {true, true, true, false}), 0.5);
  EXPECT_DOUBLE_EQ(key_accuracy({}, {}), 0.0);
}

TEST(PrimeProbe, MonitorOffRecoversKeyExactly) {
  const auto key = bits_from_seed(64, 5);
  const PrimeProbeResult r = run_prime_probe(scenario(key, false));
  ASSERT_EQ(r.trace.iterations.size(), 64u);
  EXPECT_EQ(r.key.inferred_bits, key);
  EXPECT_DOUBLE_EQ(r.key.accuracy, 1.0);
  for (const auto& it : r.trace.iterations) {
    EXPECT_EQ(it[0].observed_miss, it[0].victim_accessed);
    EXPECT_TRUE(it[1].victim_accessed);
    EXPECT_FALSE(it[0].prefetch_installed);
  }
  EXPECT_TRUE(r.events.events().empty());
}

TEST(PrimeProbe, IdleSquareLineShowsNoMisses) {
  const PrimeProbeResult r = run_prime_probe(scenario(std::vector<bool>(40, false), false));
  for (const auto& it : r.trace.iterations) EXPECT_FALSE(it[0].observed_miss);
}

TEST(PrimeProbe, MonitorOnCapturesAndPrefetches) {
  const PrimeProbeResult r = run_prime_probe(scenario(bits_from_seed(64, 5), true));
  EXPECT_GT(r.monitor_stats.captures, 0u);
  EXPECT_GT(r.prefetches_installed, 0u);
  EXPECT_FALSE(r.events.events().empty());
  EXPECT_LT(r.key.accuracy, 1.0);
}

TEST(PrimeProbe, Deterministic) {
  const auto s = scenario(bits_from_seed(32, 9), true);
  const PrimeProbeResult a = run_prime_probe(s), b = run_prime_probe(s);
  EXPECT_EQ(a.key.inferred_bits, b.key.inferred_bits);
  EXPECT_EQ(a.events.events(), b.events.events());
}

TEST(BruteForce, AbsentTargetThrows) {
  AutoCuckooFilter f;
  std::mt19937_64 rng(1);
  EXPECT_THROW(run_brute_force_evict(f, 0x1000, rng), std::invalid_argument);
}

TEST(BruteForce, EmptyFilterNeedsTheWholeCapacityFirst) {
  FilterConfig c;
  c.buckets = 16;
  c.entries_per_bucket = 2;
  AutoCuckooFilter f(c);
  f.query_and_update(0x1000);
  std::mt19937_64 rng(3);
  const BruteForceResult r = run_brute_force_evict(f, 0x1000, rng);
  EXPECT_TRUE(r.evicted);
  EXPECT_GE(r.fills, 31u);  // no deletion happens before the filter is full
  EXPECT_FALSE(f.contains(0x1000));
}

TEST(BruteForce, BudgetExhaustionReported) {
  AutoCuckooFilter f;
  f.query_and_update(0x1000);
  std::mt19937_64 rng(3);
  const BruteForceResult r = run_brute_force_evict(f, 0x1000, rng, 10);
  EXPECT_FALSE(r.evicted);
  EXPECT_EQ(r.fills, 10u);
}

TEST(ReverseTree, PlanSizes) {
  FilterConfig c;  // l=1024, b=8, MNK=4
  EvictionTreePlan p = plan_eviction_tree(c);
  EXPECT_EQ(p.eviction_set_size, 32768u);
  EXPECT_EQ(p.buckets_needed, 2u + 8 + 64 + 512 + 4096);
  EXPECT_FALSE(p.fits);
  c.buckets = 64;
  c.entries_per_bucket = 2;
  for (unsigned mnk : {0u, 1u, 2u}) {
    c.max_kicks = mnk;
    p = plan_eviction_tree(c);
    EXPECT_EQ(p.eviction_set_size, 2u << mnk);
    EXPECT_TRUE(p.fits);
  }
}

TEST(ReverseTree, NodesPointAtTheirParents) {
  FilterConfig c;
  c.buckets = 64;
  c.entries_per_bucket = 2;
  c.fingerprint_bits = 8;
  c.max_kicks = 2;
  const FilterHasher h(c);
  Address target = 0;
  for (Address n = 1;; ++n)
    if (auto [mu, sigma] = h.candidate_buckets(n << 6); mu != sigma) {
      target = n << 6;
      break;
    }
  const EvictionTree t = build_eviction_tree(c, target, 4);
  ASSERT_EQ(t.nodes.size(), 3u);
  EXPECT_EQ(t.nodes[1].size(), 2u);
  EXPECT_EQ(t.nodes[2].size(), 4u);
  EXPECT_EQ(t.leaves.size(), 8u);
  ASSERT_EQ(t.routing.size(), 1u);
  EXPECT_EQ(t.routing[0].size(), 4u);
  for (std::size_t i = 0; i < t.leaves.size(); ++i) {
    const auto [mu, sigma] = h.candidate_buckets(t.leaves[i]);
    EXPECT_EQ(mu, t.nodes[2][i / 2]);
    EXPECT_EQ(sigma, t.nodes[1][i / 4]);
  }
  for (std::size_t i = 0; i < t.routing[0].size(); ++i) {
    const auto [mu, sigma] = h.candidate_buckets(t.routing[0][i]);
    EXPECT_EQ(mu, t.nodes[1][i / 2]);
    EXPECT_EQ(sigma, t.target_bucket);
  }
}

TEST(ReverseAttack, KickFreeTreeEvictsTarget) {
  FilterConfig c;
  c.buckets = 64;
  c.entries_per_bucket = 2;
  c.fingerprint_bits = 8;
  c.max_kicks = 0;
  int successes = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ReverseAttackOptions o;
    o.seed = seed;
    const ReverseAttackReport r = run_reverse_attack(c, choose_reverse_target(c, seed), o);
    EXPECT_EQ(r.eviction_set_size_used, 2u);
    EXPECT_TRUE(r.materialized);
    EXPECT_LE(r.fills_issued, 20u);
    successes += r.success;
  }
  EXPECT_GE(successes, 18);
}

TEST(ReverseAttack, OneKickTreeUsesFourRecords) {
  FilterConfig c;
  c.buckets = 64;
  c.entries_per_bucket = 2;
  c.fingerprint_bits = 8;
  c.max_kicks = 1;
  const ReverseAttackReport r = run_reverse_attack(c, choose_reverse_target(c, 1), {});
  EXPECT_EQ(r.eviction_set_size_used, 4u);
  EXPECT_TRUE(r.materialized);
  EXPECT_GT(r.fills_issued, 0u);
  EXPECT_LE(r.fills_issued, 40u);
}

TEST(ReverseAttack, OversizedTreeIsPlanOnly) {
  const ReverseAttackReport r = run_reverse_attack(FilterConfig{}, Address{1} << 45 | 0x1040, {});
  EXPECT_FALSE(r.materialized);
  EXPECT_EQ(r.eviction_set_size_used, 32768u);
  EXPECT_EQ(r.fills_issued, 0u);
  EXPECT_FALSE(r.success);
}

TEST(ReverseAttack, SearchRejectsLargeTrees) {
  FilterConfig c;
  c.buckets = 256;
  c.entries_per_bucket = 3;
  c.max_kicks = 2;  // 27 leaves
  EXPECT_THROW(search_minimal_eviction_set(c, Address{1} << 45 | 0x1040, 10, 0.9, 1),
               std::invalid_argument);
}
