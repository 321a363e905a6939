#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pipo/filter.hpp"

namespace pipo {

using Cycle = std::uint64_t;

struct MonitorConfig {
  Cycle prefetch_delay = 100;
  FilterConfig filter{};
};

enum class MonitorAction { None, Capture };

struct PrefetchRequest {
  Address addr = 0;
  Cycle due_cycle = 0;
  friend bool operator==(const PrefetchRequest&, const PrefetchRequest&) = default;
};

struct LineFlags {
  bool tagged = false;
  bool accessed_since_tag = false;
  bool prefetched = false;  // a prefetch was issued since the last capture
  friend bool operator==(const LineFlags&, const LineFlags&) = default;
};

// Lines currently marked Ping-Pong. Unbounded.
class PingPongRegistry {
 public:
  bool tagged(Address line) const;
  bool accessed(Address line) const;
  const LineFlags* find(Address line) const;
  std::size_t size() const { return lines_.size(); }

  void tag(Address line);
  void mark_accessed(Address line);  // no-op for untagged lines
  LineFlags& at(Address line);       // throws std::out_of_range
  void erase(Address line) { lines_.erase(line); }

 private:
  std::unordered_map<Address, LineFlags> lines_;
};

enum class EventKind { Access, Capture, PEvict, Prefetch };

const char* to_string(EventKind k);

struct MonitorEvent {
  Cycle cycle = 0;
  EventKind kind = EventKind::Access;
  Address addr = 0;
  int security = -1;  // -1 when not applicable
  std::string detail;
  friend bool operator==(const MonitorEvent&, const MonitorEvent&) = default;
};

class EventLog {
 public:
  void push(MonitorEvent e) { events_.push_back(std::move(e)); }
  const std::vector<MonitorEvent>& events() const { return events_; }
  void clear() { events_.clear(); }
  // Columns: cycle,event,addr_hex,security,detail. Security is empty when
  // not applicable.
  void write_csv(std::ostream& os) const;

 private:
  std::vector<MonitorEvent> events_;
};

struct MonitorStats {
  std::uint64_t accesses = 0;
  std::uint64_t captures = 0;
  std::uint64_t pevicts = 0;
  std::uint64_t prefetches_scheduled = 0;
  std::uint64_t prefetches_suppressed = 0;  // endless-prefetch guard
};

// Addresses handed to the monitor are line addresses with the offset bits
// cleared by the caller.
class PiPoMonitor {
 public:
  explicit PiPoMonitor(MonitorConfig config = {});

  const MonitorConfig& config() const { return config_; }
  const AutoCuckooFilter& filter() const { return filter_; }
  AutoCuckooFilter& filter() { return filter_; }
  const PingPongRegistry& registry() const { return registry_; }
  const MonitorStats& stats() const { return stats_; }
  EventLog& log() { return log_; }
  const EventLog& log() const { return log_; }
  std::size_t pending() const { return queue_.size(); }

  // One memory Access (LLC miss fetch).
  MonitorAction on_access(Address addr, Cycle cycle);
  // Demand hit on a tagged LLC line; Accesses are covered by on_access.
  void on_tagged_hit(Address addr);
  void on_capture(Address addr, Cycle cycle);
  // Throws std::logic_error when addr is not in the registry. A suppressed
  // eviction also cancels requests still queued for the line.
  std::optional<PrefetchRequest> on_pevict(Address addr, Cycle cycle);
  // Removes and returns requests with due_cycle <= cycle, in due order, FIFO
  // among ties. Throws std::invalid_argument if cycle moves backwards.
  std::vector<PrefetchRequest> tick(Cycle cycle);

 private:
  MonitorConfig config_;
  AutoCuckooFilter filter_;
  PingPongRegistry registry_;
  std::multimap<Cycle, PrefetchRequest> queue_;
  Cycle last_tick_ = 0;
  MonitorStats stats_;
  EventLog log_;
};

std::string hex_address(Address addr);

}  // namespace pipo
