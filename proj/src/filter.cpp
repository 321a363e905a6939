#include "pipo/filter.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pipo {

namespace {

// Salts that split one seed into independent hash streams.
constexpr std::uint64_t kBucketSalt = 0x9e37'79b9'7f4a'7c15ULL;
constexpr std::uint64_t kFingerprintSalt = 0xc2b2'ae3d'27d4'eb4fULL;
constexpr std::uint64_t kOffsetSalt = 0x1656'67b1'9e37'79f9ULL;

}  // namespace

std::uint64_t mix64(std::uint64_t x, std::uint64_t seed) {
  x ^= seed;
  x += 0x9e37'79b9'7f4a'7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58'476d'1ce4'e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d0'49bb'1331'11ebULL;
  return x ^ (x >> 31);
}

void FilterConfig::validate() const {
  if (buckets == 0 || !std::has_single_bit(buckets))
    throw std::invalid_argument("filter: bucket count must be a power of two, got " +
                                std::to_string(buckets));
  if (entries_per_bucket == 0)
    throw std::invalid_argument("filter: entries per bucket must be positive");
  if (fingerprint_bits < 1 || fingerprint_bits > 16)
    throw std::invalid_argument("filter: fingerprint width must be in 1..16, got " +
                                std::to_string(fingerprint_bits));
  if (sec_thr < 1 || sec_thr > kSecurityMax)
    throw std::invalid_argument("filter: sec_thr must be in 1.." + std::to_string(kSecurityMax) +
                                ", got " + std::to_string(sec_thr));
}

const char* to_string(FilterStatus s) {
  switch (s) {
    case FilterStatus::Inserted: return "Inserted";
    case FilterStatus::ReAccess: return "ReAccess";
    case FilterStatus::PingPong: return "PingPong";
  }
  return "?";
}

FilterHasher::FilterHasher(const FilterConfig& config)
    : seed_(config.hash_seed),
      bucket_mask_(config.buckets - 1),
      fp_mask_(static_cast<std::uint32_t>((1u << config.fingerprint_bits) - 1)) {}

Fingerprint FilterHasher::fingerprint_of(Address addr) const {
  const std::uint64_t h = mix64(addr >> kLineOffsetBits, seed_ ^ kFingerprintSalt);
  return {static_cast<std::uint16_t>(h & fp_mask_)};
}

BucketIndex FilterHasher::primary_bucket(Address addr) const {
  return static_cast<BucketIndex>(mix64(addr >> kLineOffsetBits, seed_ ^ kBucketSalt) &
                                  bucket_mask_);
}

BucketIndex FilterHasher::fingerprint_offset(Fingerprint fp) const {
  return static_cast<BucketIndex>(mix64(fp.value, seed_ ^ kOffsetSalt) & bucket_mask_);
}

std::pair<BucketIndex, BucketIndex> FilterHasher::candidate_buckets(Address addr) const {
  const BucketIndex mu = primary_bucket(addr);
  return {mu, alternate_bucket(mu, fingerprint_of(addr))};
}

double theoretical_fpr(const FilterConfig& config) {
  const double miss = 1.0 - std::ldexp(1.0, -static_cast<int>(config.fingerprint_bits));
  return 1.0 - std::pow(miss, 2.0 * config.entries_per_bucket);
}

AutoCuckooFilter::AutoCuckooFilter(FilterConfig config)
    : config_((config.validate(), config)),
      hasher_(config_),
      table_(static_cast<std::size_t>(config_.buckets) * config_.entries_per_bucket),
      ids_(table_.size(), 0),
      rng_(config_.rng_seed) {}

FilterResponse AutoCuckooFilter::query_and_update(Address addr) {
  return query_impl(addr, [this](std::uint32_t bound) { return draw_slot(bound); });
}

InsertOutcome AutoCuckooFilter::insert_with_relocation(Fingerprint fp, BucketIndex start_bucket) {
  return insert_impl(fp, start_bucket, hasher_.alternate_bucket(start_bucket, fp),
                     [this](std::uint32_t bound) { return draw_slot(bound); });
}

bool AutoCuckooFilter::contains(Address addr) const {
  const Fingerprint fp = hasher_.fingerprint_of(addr);
  const auto [mu, sigma] = hasher_.candidate_buckets(addr);
  return find(mu, fp).has_value() || find(sigma, fp).has_value();
}

double AutoCuckooFilter::occupancy() const {
  return static_cast<double>(valid_count_) / static_cast<double>(table_.size());
}

void AutoCuckooFilter::set_entry(BucketIndex bucket, std::uint32_t slot, FilterEntry e) {
  FilterEntry& cur = table_.at(index(bucket, slot));
  if (e.valid && e.f_print.value >= (1u << config_.fingerprint_bits))
    throw std::invalid_argument("filter: fingerprint wider than f bits");
  if (e.security > config_.sec_thr)
    throw std::invalid_argument("filter: security above sec_thr");
  if (cur.valid) --valid_count_;
  if (e.valid) ++valid_count_;
  cur = e;
  ids_[index(bucket, slot)] = e.valid ? next_id_++ : 0;
}

std::optional<std::uint32_t> AutoCuckooFilter::find(BucketIndex bucket, Fingerprint fp) const {
  const FilterEntry* row = table_.data() + index(bucket, 0);
  for (std::uint32_t s = 0; s < config_.entries_per_bucket; ++s)
    if (row[s].valid && row[s].f_print == fp) return s;
  return std::nullopt;
}

std::optional<std::uint32_t> AutoCuckooFilter::vacancy(BucketIndex bucket) const {
  const FilterEntry* row = table_.data() + index(bucket, 0);
  for (std::uint32_t s = 0; s < config_.entries_per_bucket; ++s)
    if (!row[s].valid) return s;
  return std::nullopt;
}

std::uint32_t AutoCuckooFilter::draw_slot(std::uint32_t bound) {
  // Multiply-shift range reduction; portable across standard libraries,
  // unlike std::uniform_int_distribution.
  const unsigned __int128 wide = static_cast<unsigned __int128>(rng_()) * bound;
  return static_cast<std::uint32_t>(wide >> 64);
}

std::vector<std::uint8_t> AutoCuckooFilter::serialize() const {
  const std::size_t width = entry_bits(config_);
  std::vector<std::uint8_t> out((table_.size() * width + 7) / 8, 0);
  std::size_t bit = 0;
  auto put = [&](std::uint32_t value, unsigned nbits) {
    for (unsigned i = 0; i < nbits; ++i, ++bit)
      if ((value >> i) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
  };
  for (const FilterEntry& e : table_) {
    put(e.valid ? 1u : 0u, 1);
    put(e.f_print.value, config_.fingerprint_bits);
    put(e.security, kSecurityBits);
  }
  return out;
}

AutoCuckooFilter AutoCuckooFilter::deserialize(const FilterConfig& config,
                                               std::span<const std::uint8_t> bytes) {
  AutoCuckooFilter filter(config);
  const std::size_t width = entry_bits(config);
  if (bytes.size() != (filter.table_.size() * width + 7) / 8)
    throw std::invalid_argument("filter: serialized layout has the wrong size");
  std::size_t bit = 0;
  auto get = [&](unsigned nbits) {
    std::uint32_t v = 0;
    for (unsigned i = 0; i < nbits; ++i, ++bit)
      v |= static_cast<std::uint32_t>((bytes[bit / 8] >> (bit % 8)) & 1u) << i;
    return v;
  };
  for (std::size_t k = 0; k < filter.table_.size(); ++k) {
    FilterEntry e;
    e.valid = get(1) != 0;
    e.f_print.value = static_cast<std::uint16_t>(get(config.fingerprint_bits));
    e.security = static_cast<std::uint8_t>(get(kSecurityBits));
    filter.set_entry(static_cast<BucketIndex>(k / config.entries_per_bucket),
                     static_cast<std::uint32_t>(k % config.entries_per_bucket), e);
  }
  return filter;
}

}  // namespace pipo
