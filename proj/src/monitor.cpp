#include "pipo/monitor.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace pipo {

bool PingPongRegistry::tagged(Address line) const {
  const LineFlags* f = find(line);
  return f && f->tagged;
}

bool PingPongRegistry::accessed(Address line) const {
  const LineFlags* f = find(line);
  return f && f->accessed_since_tag;
}

const LineFlags* PingPongRegistry::find(Address line) const {
  auto it = lines_.find(line);
  return it == lines_.end() ? nullptr : &it->second;
}

void PingPongRegistry::tag(Address line) { lines_[line] = LineFlags{true, false, false}; }

void PingPongRegistry::mark_accessed(Address line) {
  auto it = lines_.find(line);
  if (it != lines_.end()) it->second.accessed_since_tag = true;
}

LineFlags& PingPongRegistry::at(Address line) { return lines_.at(line); }

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Access: return "access";
    case EventKind::Capture: return "capture";
    case EventKind::PEvict: return "pevict";
    case EventKind::Prefetch: return "prefetch";
  }
  return "?";
}

std::string hex_address(Address addr) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(addr));
  return buf;
}

void EventLog::write_csv(std::ostream& os) const {
  os << "cycle,event,addr_hex,security,detail\n";
  for (const MonitorEvent& e : events_) {
    os << e.cycle << ',' << to_string(e.kind) << ',' << hex_address(e.addr) << ',';
    if (e.security >= 0) os << e.security;
    os << ',' << e.detail << '\n';
  }
}

PiPoMonitor::PiPoMonitor(MonitorConfig config) : config_(config), filter_(config.filter) {}

MonitorAction PiPoMonitor::on_access(Address addr, Cycle cycle) {
  ++stats_.accesses;
  const FilterResponse r = filter_.query_and_update(addr);
  registry_.mark_accessed(addr);
  log_.push({cycle, EventKind::Access, addr, r.security, to_string(r.status)});
  return r.status == FilterStatus::PingPong ? MonitorAction::Capture : MonitorAction::None;
}

void PiPoMonitor::on_tagged_hit(Address addr) { registry_.mark_accessed(addr); }

void PiPoMonitor::on_capture(Address addr, Cycle cycle) {
  ++stats_.captures;
  registry_.tag(addr);
  log_.push({cycle, EventKind::Capture, addr, -1, ""});
}

std::optional<PrefetchRequest> PiPoMonitor::on_pevict(Address addr, Cycle cycle) {
  if (!registry_.tagged(addr))
    throw std::logic_error("monitor: pEvict for untracked line " + hex_address(addr));
  ++stats_.pevicts;
  LineFlags& flags = registry_.at(addr);
  if (flags.prefetched && !flags.accessed_since_tag) {
    ++stats_.prefetches_suppressed;
    registry_.erase(addr);
    // An older request may still be queued; it must not bring back a line the
    // registry no longer tracks.
    std::erase_if(queue_, [addr](const auto& kv) { return kv.second.addr == addr; });
    log_.push({cycle, EventKind::PEvict, addr, -1, "suppressed"});
    return std::nullopt;
  }
  flags.prefetched = true;
  flags.accessed_since_tag = false;
  const PrefetchRequest req{addr, cycle + config_.prefetch_delay};
  queue_.emplace(req.due_cycle, req);
  ++stats_.prefetches_scheduled;
  log_.push({cycle, EventKind::PEvict, addr, -1, "due=" + std::to_string(req.due_cycle)});
  return req;
}

std::vector<PrefetchRequest> PiPoMonitor::tick(Cycle cycle) {
  if (cycle < last_tick_)
    throw std::invalid_argument("monitor: tick cycle moved backwards (" + std::to_string(cycle) +
                                " < " + std::to_string(last_tick_) + ")");
  last_tick_ = cycle;
  std::vector<PrefetchRequest> due;
  auto end = queue_.upper_bound(cycle);
  for (auto it = queue_.begin(); it != end; ++it) due.push_back(it->second);
  queue_.erase(queue_.begin(), end);
  return due;
}

}  // namespace pipo
