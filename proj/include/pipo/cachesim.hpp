#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pipo/filter.hpp"
#include "pipo/monitor.hpp"

namespace pipo {

inline constexpr std::uint32_t kLineSize = 64;

inline constexpr Address line_of(Address addr) { return addr & ~Address{kLineSize - 1}; }

enum class Level { L1 = 0, L2 = 1, LLC = 2, Memory = 3 };

const char* to_string(Level l);

struct LevelGeometry {
  std::uint64_t size_bytes = 0;
  std::uint32_t ways = 0;
  std::uint32_t latency = 0;

  std::uint32_t sets() const {
    return static_cast<std::uint32_t>(size_bytes / (std::uint64_t{kLineSize} * ways));
  }
};

struct CacheGeometry {
  LevelGeometry l1{64 * 1024, 4, 2};
  LevelGeometry l2{256 * 1024, 8, 18};
  LevelGeometry llc{4 * 1024 * 1024, 16, 35};
  std::uint32_t dram_latency = 200;
  std::uint32_t cores = 4;

  const LevelGeometry& level(Level l) const;
  // Throws std::invalid_argument unless every level has a power-of-two set
  // count and at least one core is configured.
  void validate() const;

  std::uint32_t llc_hit_latency() const { return l1.latency + l2.latency + llc.latency; }
  std::uint32_t memory_latency() const { return llc_hit_latency() + dram_latency; }
};

struct BackInvalidation {
  std::uint32_t core = 0;
  Address addr = 0;
  friend bool operator==(const BackInvalidation&, const BackInvalidation&) = default;
};

struct AccessResult {
  Level hit_level = Level::Memory;
  std::uint32_t latency = 0;
  std::vector<BackInvalidation> back_invalidations;
  bool memory_access = false;
  std::vector<Address> llc_evictions;
  std::vector<Address> pevicts;  // subset of llc_evictions that carried the tag
  bool tagged_access = false;    // demand hit or fill of a Ping-Pong line
  friend bool operator==(const AccessResult&, const AccessResult&) = default;
};

struct CacheLineState {
  Address tag = 0;  // full line address
  bool valid = false;
  std::uint64_t lru_stamp = 0;  // larger is more recent
  bool pingpong_tag = false;
  bool accessed_since_tag = false;
};

// Private L1/L2 per core and a shared inclusive LLC, strict LRU everywhere.
class CacheHierarchy {
 public:
  explicit CacheHierarchy(CacheGeometry geometry = {});

  const CacheGeometry& geometry() const { return geometry_; }

  // Throws std::out_of_range for an unknown core.
  AccessResult access(std::uint32_t core, Address addr, Cycle cycle);
  // Installs into the LLC only, tagged and most recently used. A line that is
  // already resident is left untouched and reported as not installed.
  AccessResult install_prefetch(Address addr, Cycle cycle);
  // Marks a resident LLC line as Ping-Pong; returns false if it is absent.
  bool set_pingpong_tag(Address addr);

  std::uint32_t build_set_index(Address addr, Level level) const;

  bool contains(std::uint32_t core, Level level, Address addr) const;
  bool llc_contains(Address addr) const { return find_llc(addr) != nullptr; }
  const CacheLineState* llc_line(Address addr) const { return find_llc(addr); }
  std::vector<CacheLineState> llc_set(std::uint32_t set) const;

  // Full scan: every private line is also in the LLC.
  bool inclusion_holds() const;

 private:
  struct Array {
    LevelGeometry geo;
    std::vector<CacheLineState> lines;  // sets x ways
    std::uint32_t set_mask = 0;

    CacheLineState* row(std::uint32_t set) { return lines.data() + std::size_t{set} * geo.ways; }
    const CacheLineState* row(std::uint32_t set) const {
      return lines.data() + std::size_t{set} * geo.ways;
    }
    std::uint32_t set_of(Address line) const {
      return static_cast<std::uint32_t>((line / kLineSize) & set_mask);
    }
    CacheLineState* find(Address line);
    const CacheLineState* find(Address line) const;
    // Returns the slot to fill; `victim` receives the evicted line if any.
    CacheLineState& victim_slot(Address line, std::optional<CacheLineState>& victim);
    bool invalidate(Address line);
  };

  static Array make_array(const LevelGeometry& g);
  const Array& array(std::uint32_t core, Level level) const;
  const CacheLineState* find_llc(Address line) const { return llc_.find(line); }
  void fill_private(std::uint32_t core, Level level, Address line);
  CacheLineState& fill_llc(Address line, AccessResult& out);

  CacheGeometry geometry_;
  std::vector<std::array<Array, 2>> private_;  // [core][L1, L2]
  Array llc_;
  std::uint64_t clock_ = 0;
};

struct TraceRecord {
  Cycle cycle = 0;
  std::uint32_t core = 0;
  bool write = false;
  Address addr = 0;
  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

// Lines of "{cycle} {core} {R|W} {addr_hex}"; blank lines and '#' comments
// are skipped. Throws std::runtime_error naming the offending line.
std::vector<TraceRecord> parse_trace(std::istream& in);

// Cache hierarchy plus optional monitor, driven in cycle order.
class Simulator {
 public:
  explicit Simulator(CacheGeometry geometry = {},
                     std::optional<MonitorConfig> monitor = MonitorConfig{});

  CacheHierarchy& cache() { return cache_; }
  const CacheHierarchy& cache() const { return cache_; }
  bool monitor_enabled() const { return monitor_.has_value(); }
  PiPoMonitor* monitor() { return monitor_ ? &*monitor_ : nullptr; }
  const PiPoMonitor* monitor() const { return monitor_ ? &*monitor_ : nullptr; }

  // Installs every prefetch due by `cycle`, including cascades.
  void advance(Cycle cycle);
  // Demand access at `cycle`; drains due prefetches first.
  AccessResult access(std::uint32_t core, Address addr, Cycle cycle);
  std::vector<AccessResult> replay(const std::vector<TraceRecord>& trace);

  std::uint64_t prefetches_installed() const { return prefetches_installed_; }

 private:
  void handle_pevicts(const std::vector<Address>& pevicts, Cycle cycle);

  CacheHierarchy cache_;
  std::optional<PiPoMonitor> monitor_;
  std::uint64_t prefetches_installed_ = 0;
};

}  // namespace pipo
