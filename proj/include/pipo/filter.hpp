#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace pipo {

using Address = std::uint64_t;
using BucketIndex = std::uint32_t;

// Line offset bits ignored by every hash in the filter.
inline constexpr unsigned kLineOffsetBits = 6;

struct FilterConfig {
  std::uint32_t buckets = 1024;          // l, power of two
  std::uint32_t entries_per_bucket = 8;  // b
  unsigned fingerprint_bits = 12;        // f, 1..16
  unsigned max_kicks = 4;                // MNK
  unsigned sec_thr = 3;                  // Security saturation / capture value
  std::uint64_t rng_seed = 1;            // victim selection stream
  std::uint64_t hash_seed = 0x5eed'c0ff'ee00'1234ULL;

  // Throws std::invalid_argument on a malformed configuration.
  void validate() const;
};

inline constexpr unsigned kSecurityBits = 2;
inline constexpr unsigned kSecurityMax = (1u << kSecurityBits) - 1;

struct Fingerprint {
  std::uint16_t value = 0;
  friend bool operator==(Fingerprint, Fingerprint) = default;
};

struct FilterEntry {
  bool valid = false;
  Fingerprint f_print{};
  std::uint8_t security = 0;
  friend bool operator==(const FilterEntry&, const FilterEntry&) = default;
};

enum class FilterStatus { Inserted, ReAccess, PingPong };

const char* to_string(FilterStatus s);

// Identity of one stored record across relocations. Instrumentation only; not
// part of the modeled hardware state.
using RecordId = std::uint64_t;

struct DroppedRecord {
  RecordId record = 0;
  BucketIndex bucket = 0;
  Fingerprint f_print{};
  std::uint8_t security = 0;
};

struct FilterResponse {
  FilterStatus status = FilterStatus::Inserted;
  std::uint8_t security = 0;
  RecordId record = 0;  // the entry matched or installed
  std::optional<DroppedRecord> evicted;
};

struct InsertOutcome {
  RecordId record = 0;
  BucketIndex bucket = 0;  // where the new record landed
  std::uint32_t slot = 0;
  unsigned relocations = 0;
  std::optional<DroppedRecord> dropped;
};

struct FilterStats {
  std::uint64_t queries = 0;
  std::uint64_t insertions = 0;
  std::uint64_t merges = 0;  // queries answered by an existing entry
  std::uint64_t relocations = 0;
  std::uint64_t autonomic_deletions = 0;
  std::uint64_t self_paired = 0;  // insertions whose two candidate buckets coincide
};

// Stateless hashing shared by the filter and by white-box analyses of it.
class FilterHasher {
 public:
  explicit FilterHasher(const FilterConfig& config);

  Fingerprint fingerprint_of(Address addr) const;
  BucketIndex primary_bucket(Address addr) const;
  // hash(fp) mod l; the XOR distance between the two candidate buckets.
  BucketIndex fingerprint_offset(Fingerprint fp) const;
  BucketIndex alternate_bucket(BucketIndex i, Fingerprint fp) const {
    return i ^ fingerprint_offset(fp);
  }
  std::pair<BucketIndex, BucketIndex> candidate_buckets(Address addr) const;

 private:
  std::uint64_t seed_;
  std::uint32_t bucket_mask_;
  std::uint32_t fp_mask_;
};

// Mixer used by every hash in the filter: a seeded splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x, std::uint64_t seed);

// 1 - (1 - 2^-f)^(2b)
double theoretical_fpr(const FilterConfig& config);

// Bits one entry occupies in the flat layout: valid + fPrint + Security.
inline std::size_t entry_bits(const FilterConfig& c) {
  return 1 + c.fingerprint_bits + kSecurityBits;
}

class AutoCuckooFilter {
 public:
  explicit AutoCuckooFilter(FilterConfig config = {});

  const FilterConfig& config() const { return config_; }
  const FilterHasher& hasher() const { return hasher_; }
  const FilterStats& stats() const { return stats_; }

  Fingerprint fingerprint_of(Address addr) const { return hasher_.fingerprint_of(addr); }
  std::pair<BucketIndex, BucketIndex> candidate_buckets(Address addr) const {
    return hasher_.candidate_buckets(addr);
  }
  BucketIndex alternate_bucket(BucketIndex i, Fingerprint fp) const {
    return hasher_.alternate_bucket(i, fp);
  }

  // Looks up the address, bumps its Security on a hit or installs a fresh
  // record on a miss. Never fails.
  FilterResponse query_and_update(Address addr);

  // Same, with victim slots drawn from `choose(bound)` instead of the
  // internal generator. Used by exhaustive explorations of the kick tree.
  template <class Chooser>
  FilterResponse query_and_update_with(Address addr, Chooser&& choose);

  // Precondition: fp is absent from both of its candidate buckets.
  InsertOutcome insert_with_relocation(Fingerprint fp, BucketIndex start_bucket);

  bool contains(Address addr) const;
  double occupancy() const;
  std::size_t valid_count() const { return valid_count_; }

  std::uint32_t buckets() const { return config_.buckets; }
  std::uint32_t entries_per_bucket() const { return config_.entries_per_bucket; }
  const FilterEntry& entry(BucketIndex bucket, std::uint32_t slot) const {
    return table_[index(bucket, slot)];
  }
  std::span<const FilterEntry> bucket(BucketIndex i) const {
    return {table_.data() + index(i, 0), config_.entries_per_bucket};
  }
  std::span<const FilterEntry> entries() const { return table_; }
  RecordId record_at(BucketIndex bucket, std::uint32_t slot) const {
    return ids_[index(bucket, slot)];
  }

  // Places a record directly, bypassing hashing. Test and oracle support only.
  void set_entry(BucketIndex bucket, std::uint32_t slot, FilterEntry e);

  // Flat layout: l*b records, row-major by bucket then slot. Record k occupies
  // bits [k*(f+3), (k+1)*(f+3)): valid, then fPrint LSB first, then Security
  // LSB first. Bits are packed LSB first into bytes.
  std::vector<std::uint8_t> serialize() const;
  static AutoCuckooFilter deserialize(const FilterConfig& config,
                                      std::span<const std::uint8_t> bytes);

  friend bool operator==(const AutoCuckooFilter& a, const AutoCuckooFilter& b) {
    return a.table_ == b.table_;
  }

 private:
  std::size_t index(BucketIndex bucket, std::uint32_t slot) const {
    return static_cast<std::size_t>(bucket) * config_.entries_per_bucket + slot;
  }
  std::optional<std::uint32_t> find(BucketIndex bucket, Fingerprint fp) const;
  std::optional<std::uint32_t> vacancy(BucketIndex bucket) const;
  std::uint32_t draw_slot(std::uint32_t bound);

  template <class Chooser>
  FilterResponse query_impl(Address addr, Chooser&& choose);
  template <class Chooser>
  InsertOutcome insert_impl(Fingerprint fp, BucketIndex start, BucketIndex other,
                            Chooser&& choose);

  FilterConfig config_;
  FilterHasher hasher_;
  std::vector<FilterEntry> table_;
  std::vector<RecordId> ids_;
  RecordId next_id_ = 1;
  std::size_t valid_count_ = 0;
  std::mt19937_64 rng_;
  FilterStats stats_;
};

// ---------------------------------------------------------------------------

template <class Chooser>
FilterResponse AutoCuckooFilter::query_and_update_with(Address addr, Chooser&& choose) {
  return query_impl(addr, choose);
}

template <class Chooser>
FilterResponse AutoCuckooFilter::query_impl(Address addr, Chooser&& choose) {
  ++stats_.queries;
  const Fingerprint fp = hasher_.fingerprint_of(addr);
  const auto [mu, sigma] = hasher_.candidate_buckets(addr);

  // mu is checked first; a duplicate in sigma is only reachable by direct
  // state construction.
  for (BucketIndex b : {mu, sigma}) {
    if (auto slot = find(b, fp)) {
      FilterEntry& e = table_[index(b, *slot)];
      if (e.security < config_.sec_thr) ++e.security;
      ++stats_.merges;
      return {e.security == config_.sec_thr ? FilterStatus::PingPong : FilterStatus::ReAccess,
              e.security, ids_[index(b, *slot)], std::nullopt};
    }
  }

  if (mu == sigma) ++stats_.self_paired;
  InsertOutcome out = insert_impl(fp, mu, sigma, choose);
  return {FilterStatus::Inserted, 0, out.record, out.dropped};
}

template <class Chooser>
InsertOutcome AutoCuckooFilter::insert_impl(Fingerprint fp, BucketIndex start, BucketIndex other,
                                            Chooser&& choose) {
  ++stats_.insertions;
  FilterEntry carried{true, fp, 0};
  RecordId carried_id = next_id_++;

  for (BucketIndex b : {start, other}) {
    if (auto slot = vacancy(b)) {
      table_[index(b, *slot)] = carried;
      ids_[index(b, *slot)] = carried_id;
      ++valid_count_;
      return {carried_id, b, *slot, 0, std::nullopt};
    }
  }

  InsertOutcome out;
  out.record = carried_id;
  out.bucket = start;
  BucketIndex at = start;
  for (unsigned kick = 0;; ++kick) {
    const std::uint32_t slot = choose(config_.entries_per_bucket);
    std::swap(carried, table_[index(at, slot)]);
    std::swap(carried_id, ids_[index(at, slot)]);
    if (kick == 0) out.slot = slot;
    if (kick == config_.max_kicks) {
      // Autonomic deletion: the last displaced record leaves the filter.
      ++stats_.autonomic_deletions;
      out.dropped = DroppedRecord{carried_id, at, carried.f_print, carried.security};
      return out;
    }
    at = hasher_.alternate_bucket(at, carried.f_print);
    ++out.relocations;
    ++stats_.relocations;
    if (auto free_slot = vacancy(at)) {
      table_[index(at, *free_slot)] = carried;
      ids_[index(at, *free_slot)] = carried_id;
      ++valid_count_;
      return out;
    }
  }
}

}  // namespace pipo
