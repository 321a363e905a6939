#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "pipo/cachesim.hpp"
#include "pipo/filter.hpp"
#include "pipo/monitor.hpp"

namespace pipo {

// ---------------------------------------------------------------------------
// Prime+Probe against square-and-multiply

struct SquareMultiplyVictim {
  std::vector<bool> secret_bits;
  Address square_addr = 0;
  Address multiply_addr = 0;

  // Bit 1: square then multiply. Bit 0: multiply only.
  std::vector<Address> schedule(std::size_t iteration) const;
};

// `ways` distinct lines congruent with the target in the LLC, none equal to
// it, drawn from [0, address_limit). Throws std::length_error when the range
// holds too few congruent lines.
std::vector<Address> build_eviction_set(Address target, const CacheGeometry& geometry,
                                        Address address_limit = Address{1} << 48);

// Lines sharing the target's L1 and L2 sets but no LLC set with the target or
// `avoid`; walking them pushes congruent lines out of the private caches.
std::vector<Address> build_private_flush_set(Address target, const CacheGeometry& geometry,
                                             const std::vector<Address>& avoid = {});

// Midpoint of the LLC array latency and the full memory path: 145 cycles at
// the default geometry, well clear of both 55 (LLC hit) and 255 (memory).
std::uint32_t default_miss_threshold(const CacheGeometry& geometry);

struct PrimeProbeScenario {
  CacheGeometry geometry{};
  std::optional<MonitorConfig> monitor{};  // disengaged: monitor off
  SquareMultiplyVictim victim{};
  std::uint32_t attacker_core = 0;
  std::uint32_t victim_core = 1;
  Cycle probe_period = 5000;
  std::uint32_t miss_threshold = 0;  // 0: default_miss_threshold
};

struct ProbeSample {
  bool observed_miss = false;
  bool victim_accessed = false;
  bool prefetch_installed = false;  // monitor brought the target back this window
  bool target_resident = false;     // target in LLC when the probe starts
};

// Index 0 is the square target, 1 the multiply target.
struct ProbeTrace {
  std::vector<std::array<ProbeSample, 2>> iterations;
};

struct KeyRecoveryResult {
  std::vector<bool> inferred_bits;
  std::vector<bool> true_bits;
  double accuracy = 0.0;
};

struct PrimeProbeResult {
  ProbeTrace trace;
  KeyRecoveryResult key;
  MonitorStats monitor_stats{};
  std::uint64_t prefetches_installed = 0;
  EventLog events;  // empty with the monitor off
};

// Iteration i: the victim runs bit i in the middle of window i and the
// attacker's probe at the start of window i+1 classifies it. Probes walk the
// eviction set in alternating directions so that one foreign line costs
// exactly one attacker miss under LRU.
PrimeProbeResult run_prime_probe(const PrimeProbeScenario& scenario);

// Matching positions over total; 0 for empty input.
double key_accuracy(const std::vector<bool>& inferred, const std::vector<bool>& truth);

// ---------------------------------------------------------------------------
// Filter flushing

struct BruteForceResult {
  std::uint64_t fills = 0;
  bool evicted = false;  // false only when max_fills ran out
};

// Inserts fresh random addresses until contains(target) turns false. Throws
// std::invalid_argument if the target is not recorded.
BruteForceResult run_brute_force_evict(AutoCuckooFilter& filter, Address target,
                                       std::mt19937_64& rng,
                                       std::uint64_t max_fills = UINT64_MAX);

// ---------------------------------------------------------------------------
// Reverse-engineered eviction trees

// Layered tree rooted at the target's bucket: level k holds b^k buckets, and
// each level-k bucket is reached from its parent after one relocation. The
// leaf level's b^(MNK+1) records form the eviction set.
struct EvictionTreePlan {
  std::uint32_t b = 0;
  unsigned mnk = 0;
  std::uint64_t eviction_set_size = 0;  // b^(MNK+1)
  std::uint64_t routing_records = 0;    // records parked in levels 1..MNK-1
  std::uint64_t buckets_needed = 0;     // distinct buckets incl. the target's pair
  bool fits = false;                    // buckets_needed <= l
};

EvictionTreePlan plan_eviction_tree(const FilterConfig& config);

struct EvictionTree {
  Address target = 0;
  BucketIndex target_bucket = 0;
  std::vector<std::vector<BucketIndex>> nodes;   // nodes[k]: level-k buckets
  std::vector<std::vector<Address>> routing;     // routing[k]: level k records, k < MNK
  std::vector<Address> leaves;                   // grouped by leaf bucket
};

// White-box construction by address search. Throws std::invalid_argument if
// the plan does not fit or the target's buckets coincide.
EvictionTree build_eviction_tree(const FilterConfig& config, Address target,
                                 std::uint64_t search_seed);

struct ReverseAttackOptions {
  std::uint64_t seed = 1;
  std::uint64_t budget = 0;             // 0: 10 * b^(MNK+1)
  std::uint64_t warmup_insertions = 0;  // 0: 4 * l * b
  // Indices into EvictionTree::leaves to cycle; empty uses all leaves.
  std::vector<std::size_t> leaf_subset;
};

struct ReverseAttackReport {
  std::uint64_t eviction_set_size_used = 0;
  std::uint64_t fills_issued = 0;
  bool success = false;
  bool materialized = false;  // false when the tree cannot be laid out
};

// Fills the filter with background traffic, records the target, parks the
// routing records and then cycles the eviction set until the target is gone
// or the budget is spent.
ReverseAttackReport run_reverse_attack(const FilterConfig& config, Address target,
                                       const ReverseAttackOptions& options = {});
ReverseAttackReport run_reverse_attack(const FilterConfig& config, const EvictionTree& tree,
                                       const ReverseAttackOptions& options);

struct SubsetSizeOutcome {
  std::size_t size = 0;
  std::size_t subsets = 0;
  double best_success_rate = 0.0;
};

struct EvictionSetSearch {
  std::vector<SubsetSizeOutcome> by_size;
  std::optional<std::size_t> minimal_size;  // smallest size reaching the threshold
};

// Tries every non-empty subset of the tree's leaves over `trials` seeds.
// Throws std::invalid_argument above 20 leaves.
EvictionSetSearch search_minimal_eviction_set(const FilterConfig& config, Address target,
                                              std::size_t trials, double success_threshold,
                                              std::uint64_t seed);

}  // namespace pipo
