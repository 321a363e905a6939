#include "pipo/cachesim.hpp"

#include <bit>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pipo {

const char* to_string(Level l) {
  switch (l) {
    case Level::L1: return "L1";
    case Level::L2: return "L2";
    case Level::LLC: return "LLC";
    case Level::Memory: return "Memory";
  }
  return "?";
}

const LevelGeometry& CacheGeometry::level(Level l) const {
  switch (l) {
    case Level::L1: return l1;
    case Level::L2: return l2;
    case Level::LLC: return llc;
    case Level::Memory: break;
  }
  throw std::invalid_argument("cache: memory has no geometry");
}

void CacheGeometry::validate() const {
  for (Level l : {Level::L1, Level::L2, Level::LLC}) {
    const LevelGeometry& g = level(l);
    if (g.ways == 0 || g.size_bytes % (std::uint64_t{kLineSize} * g.ways) != 0 ||
        !std::has_single_bit(g.sets()))
      throw std::invalid_argument(std::string("cache: ") + to_string(l) +
                                  " set count must be a power of two");
  }
  if (cores == 0) throw std::invalid_argument("cache: at least one core required");
}

CacheLineState* CacheHierarchy::Array::find(Address line) {
  CacheLineState* r = row(set_of(line));
  for (std::uint32_t w = 0; w < geo.ways; ++w)
    if (r[w].valid && r[w].tag == line) return &r[w];
  return nullptr;
}

const CacheLineState* CacheHierarchy::Array::find(Address line) const {
  return const_cast<Array*>(this)->find(line);
}

CacheLineState& CacheHierarchy::Array::victim_slot(Address line,
                                                   std::optional<CacheLineState>& victim) {
  CacheLineState* r = row(set_of(line));
  CacheLineState* lru = &r[0];
  for (std::uint32_t w = 0; w < geo.ways; ++w) {
    if (!r[w].valid) return r[w];
    if (r[w].lru_stamp < lru->lru_stamp) lru = &r[w];
  }
  victim = *lru;
  return *lru;
}

bool CacheHierarchy::Array::invalidate(Address line) {
  if (CacheLineState* l = find(line)) {
    *l = CacheLineState{};
    return true;
  }
  return false;
}

CacheHierarchy::Array CacheHierarchy::make_array(const LevelGeometry& g) {
  Array a;
  a.geo = g;
  a.lines.resize(std::size_t{g.sets()} * g.ways);
  a.set_mask = g.sets() - 1;
  return a;
}

CacheHierarchy::CacheHierarchy(CacheGeometry geometry)
    : geometry_((geometry.validate(), geometry)) {
  private_.reserve(geometry_.cores);
  for (std::uint32_t c = 0; c < geometry_.cores; ++c)
    private_.push_back({make_array(geometry_.l1), make_array(geometry_.l2)});
  llc_ = make_array(geometry_.llc);
}

const CacheHierarchy::Array& CacheHierarchy::array(std::uint32_t core, Level level) const {
  if (level == Level::LLC) return llc_;
  return private_.at(core)[static_cast<int>(level)];
}

std::uint32_t CacheHierarchy::build_set_index(Address addr, Level level) const {
  return static_cast<std::uint32_t>((addr / kLineSize) % geometry_.level(level).sets());
}

bool CacheHierarchy::contains(std::uint32_t core, Level level, Address addr) const {
  return array(core, level).find(line_of(addr)) != nullptr;
}

std::vector<CacheLineState> CacheHierarchy::llc_set(std::uint32_t set) const {
  const CacheLineState* r = llc_.row(set);
  return {r, r + llc_.geo.ways};
}

void CacheHierarchy::fill_private(std::uint32_t core, Level level, Address line) {
  Array& a = private_[core][static_cast<int>(level)];
  std::optional<CacheLineState> victim;  // private evictions are silent
  CacheLineState& slot = a.victim_slot(line, victim);
  slot = CacheLineState{line, true, ++clock_, false, false};
}

CacheLineState& CacheHierarchy::fill_llc(Address line, AccessResult& out) {
  std::optional<CacheLineState> victim;
  CacheLineState& slot = llc_.victim_slot(line, victim);
  if (victim) {
    out.llc_evictions.push_back(victim->tag);
    if (victim->pingpong_tag) out.pevicts.push_back(victim->tag);
    for (std::uint32_t c = 0; c < geometry_.cores; ++c) {
      bool had = private_[c][0].invalidate(victim->tag);
      had = private_[c][1].invalidate(victim->tag) || had;
      if (had) out.back_invalidations.push_back({c, victim->tag});
    }
  }
  slot = CacheLineState{line, true, ++clock_, false, false};
  return slot;
}

AccessResult CacheHierarchy::access(std::uint32_t core, Address addr, Cycle) {
  if (core >= geometry_.cores) throw std::out_of_range("cache: core index out of range");
  const Address line = line_of(addr);
  AccessResult out;
  auto& priv = private_[core];

  out.latency = geometry_.l1.latency;
  if (CacheLineState* l = priv[0].find(line)) {
    l->lru_stamp = ++clock_;
    out.hit_level = Level::L1;
    return out;
  }
  out.latency += geometry_.l2.latency;
  if (CacheLineState* l = priv[1].find(line)) {
    l->lru_stamp = ++clock_;
    fill_private(core, Level::L1, line);
    out.hit_level = Level::L2;
    return out;
  }
  out.latency += geometry_.llc.latency;
  if (CacheLineState* l = llc_.find(line)) {
    l->lru_stamp = ++clock_;
    if (l->pingpong_tag) {
      l->accessed_since_tag = true;
      out.tagged_access = true;
    }
    out.hit_level = Level::LLC;
  } else {
    out.latency += geometry_.dram_latency;
    out.hit_level = Level::Memory;
    out.memory_access = true;
    fill_llc(line, out);
  }
  fill_private(core, Level::L2, line);
  fill_private(core, Level::L1, line);
  return out;
}

AccessResult CacheHierarchy::install_prefetch(Address addr, Cycle) {
  const Address line = line_of(addr);
  AccessResult out;
  out.hit_level = Level::LLC;
  if (llc_.find(line)) return out;
  CacheLineState& slot = fill_llc(line, out);
  slot.pingpong_tag = true;
  out.hit_level = Level::Memory;
  return out;
}

bool CacheHierarchy::set_pingpong_tag(Address addr) {
  CacheLineState* l = llc_.find(line_of(addr));
  if (!l) return false;
  l->pingpong_tag = true;
  l->accessed_since_tag = false;
  return true;
}

bool CacheHierarchy::inclusion_holds() const {
  for (const auto& core : private_)
    for (const Array& a : core)
      for (const CacheLineState& l : a.lines)
        if (l.valid && !llc_.find(l.tag)) return false;
  return true;
}

std::vector<TraceRecord> parse_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string text;
  for (std::size_t lineno = 1; std::getline(in, text); ++lineno) {
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos || text[first] == '#') continue;
    std::istringstream ss(text);
    TraceRecord r;
    std::string op, addr, extra;
    if (!(ss >> r.cycle >> r.core >> op >> addr) || (ss >> extra) || (op != "R" && op != "W"))
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": malformed: " + text);
    r.write = op == "W";
    try {
      std::size_t used = 0;
      r.addr = std::stoull(addr, &used, 16);
      if (used != addr.size()) throw std::invalid_argument(addr);
    } catch (const std::exception&) {
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": bad address " + addr);
    }
    out.push_back(r);
  }
  return out;
}

Simulator::Simulator(CacheGeometry geometry, std::optional<MonitorConfig> monitor)
    : cache_(geometry) {
  if (monitor) monitor_.emplace(*monitor);
}

void Simulator::handle_pevicts(const std::vector<Address>& pevicts, Cycle cycle) {
  if (!monitor_) return;
  for (Address a : pevicts) monitor_->on_pevict(a, cycle);
}

void Simulator::advance(Cycle cycle) {
  if (!monitor_) return;
  for (;;) {
    const std::vector<PrefetchRequest> due = monitor_->tick(cycle);
    if (due.empty()) return;
    for (const PrefetchRequest& req : due) {
      // An earlier install in this batch may have evicted the line and had its
      // tag dropped by the guard.
      if (!monitor_->registry().tagged(req.addr)) {
        monitor_->log().push({req.due_cycle, EventKind::Prefetch, req.addr, -1, "cancelled"});
        continue;
      }
      const AccessResult r = cache_.install_prefetch(req.addr, req.due_cycle);
      const bool installed = r.hit_level == Level::Memory;
      if (installed) ++prefetches_installed_;
      monitor_->log().push(
          {req.due_cycle, EventKind::Prefetch, req.addr, -1, installed ? "installed" : "resident"});
      handle_pevicts(r.pevicts, req.due_cycle);
    }
  }
}

AccessResult Simulator::access(std::uint32_t core, Address addr, Cycle cycle) {
  advance(cycle);
  const Address line = line_of(addr);
  AccessResult r = cache_.access(core, line, cycle);
  if (!monitor_) return r;
  handle_pevicts(r.pevicts, cycle);
  if (r.tagged_access) monitor_->on_tagged_hit(line);
  if (r.memory_access && monitor_->on_access(line, cycle) == MonitorAction::Capture) {
    monitor_->on_capture(line, cycle);
    cache_.set_pingpong_tag(line);
  }
  return r;
}

std::vector<AccessResult> Simulator::replay(const std::vector<TraceRecord>& trace) {
  std::vector<AccessResult> out;
  out.reserve(trace.size());
  for (const TraceRecord& t : trace) out.push_back(access(t.core, t.addr, t.cycle));
  return out;
}

}  // namespace pipo
