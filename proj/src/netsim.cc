#include "bfel/netsim.h"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bfel/errors.h"
#include "bfel/rng.h"

namespace bfel {

namespace {

constexpr std::array<MessageKind, 10> kKinds{{
    {"update", LinkClass::kEdge, Phase::kUplink},
    {"forward", LinkClass::kCommittee, Phase::kOther},
    {"verdict", LinkClass::kCommittee, Phase::kOther},
    {"response", LinkClass::kCommittee, Phase::kOther},
    {"pending", LinkClass::kCommittee, Phase::kOther},
    {"vote", LinkClass::kCommittee, Phase::kOther},
    {"global", LinkClass::kEdge, Phase::kDownlink},
    {"anchor", LinkClass::kEdge, Phase::kOther},
    {"offer", LinkClass::kEdge, Phase::kOther},
    {"trade", LinkClass::kEdge, Phase::kOther},
}};

constexpr char kTraceHeader[] = "time_ms,src,dst,msg_type,size_bytes";

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) {
    throw InputError("trace field contains a CSV delimiter: " + s);
  }
}

}  // namespace

void CostModel::validate() const {
  if (!(bytes_per_ms > 0.0) || !std::isfinite(bytes_per_ms)) {
    throw ConfigError("bytes_per_ms must be positive");
  }
  for (double v : {base_latency_ms, consensus_delay_ms, jitter_ms}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("cost model delays must be >= 0");
  }
}

std::int64_t CostModel::edge_latency_ms(std::uint64_t size_bytes, std::uint64_t sequence) const {
  auto ms = static_cast<std::int64_t>(
      std::ceil(base_latency_ms + static_cast<double>(size_bytes) / bytes_per_ms));
  const auto jitter = static_cast<std::uint64_t>(std::floor(jitter_ms));
  if (jitter > 0) {
    ms += static_cast<std::int64_t>(derive_seed(jitter_seed, {sequence}) % (jitter + 1));
  }
  return ms;
}

std::int64_t CostModel::consensus_delay() const {
  return static_cast<std::int64_t>(std::ceil(consensus_delay_ms));
}

const MessageKind& message_kind(std::string_view name) {
  for (const auto& k : kKinds) {
    if (k.name == name) return k;
  }
  throw InputError("unknown message type: " + std::string(name));
}

std::span<const MessageKind> message_kinds() { return kKinds; }

void EventQueue::schedule(SimEvent event) {
  if (event.deliver_at < now_) {
    throw ProtocolError("event scheduled at " + std::to_string(event.deliver_at) +
                        " before current time " + std::to_string(now_));
  }
  event.seq = next_seq_++;
  heap_.push(std::move(event));
}

SimEvent EventQueue::pop() {
  if (heap_.empty()) throw ProtocolError("pop from empty event queue");
  SimEvent e = heap_.top();
  heap_.pop();
  now_ = e.deliver_at;
  return e;
}

Simulator::Simulator(CostModel cost) : cost_(cost) { cost_.validate(); }

void Simulator::add_node(const std::string& id, Handler handler) {
  if (!nodes_.emplace(id, std::move(handler)).second) {
    throw ConfigError("duplicate simulation node " + id);
  }
}

std::int64_t Simulator::latency(const std::string& msg_type, std::uint64_t size_bytes,
                                std::uint64_t sequence) const {
  return message_kind(msg_type).link == LinkClass::kEdge
             ? cost_.edge_latency_ms(size_bytes, sequence)
             : 0;
}

std::int64_t Simulator::send(const std::string& src, const std::string& dst,
                             const std::string& msg_type, Bytes message) {
  if (!has_node(dst)) throw ProtocolError("message to unknown node " + dst);
  check_field(src);
  check_field(dst);
  SimEvent e;
  e.sent_at = now();
  e.size_bytes = message.size();
  e.deliver_at = e.sent_at + latency(msg_type, e.size_bytes, trace_.size());
  e.src = src;
  e.dst = dst;
  e.msg_type = msg_type;
  e.message = std::move(message);
  TraceRecord rec{e.sent_at, src, dst, msg_type, e.size_bytes};
  trace_.push_back(rec);
  if (drop_ && drop_(rec)) {
    dropped_.push_back(std::move(rec));
    return e.deliver_at;
  }
  const auto at = e.deliver_at;
  queue_.schedule(std::move(e));
  return at;
}

void Simulator::set_timer(const std::string& node, std::int64_t at, const std::string& tag) {
  if (!has_node(node)) throw ProtocolError("timer for unknown node " + node);
  SimEvent e;
  e.deliver_at = at;
  e.sent_at = now();
  e.src = node;
  e.dst = node;
  e.msg_type = tag;
  e.timer = true;
  queue_.schedule(std::move(e));
}

RunStats Simulator::run_until(const std::function<bool()>& stop, std::size_t max_events) {
  RunStats stats;
  while (true) {
    if (stop && stop()) {
      stats.condition_met = true;
      return stats;
    }
    if (queue_.empty()) return stats;
    if (stats.events == max_events) {
      throw ProtocolError("event budget of " + std::to_string(max_events) + " exhausted");
    }
    SimEvent e = queue_.pop();
    ++stats.events;
    if (!e.timer) ++delivered_;
    nodes_.at(e.dst)(e);
  }
}

Digest Simulator::trace_digest() const { return sha256(trace_to_csv(trace_)); }

CommunicationCost communication_cost(std::span<const TraceRecord> trace, const CostModel& cost,
                                     std::uint64_t rounds, bool consensus,
                                     const std::function<bool(const TraceRecord&)>& select) {
  CommunicationCost out;
  std::int64_t up = 0, down = 0;
  bool open = false, downlink_seen = false;
  auto close = [&] {
    out.total_time_ms += up + down;
    ++out.rounds_observed;
    up = down = 0;
    open = downlink_seen = false;
  };
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& rec = trace[i];
    if (select && !select(rec)) continue;
    out.total_bytes += rec.size_bytes;
    const auto& kind = message_kind(rec.msg_type);
    if (kind.link != LinkClass::kEdge || kind.phase == Phase::kOther) continue;
    const auto lat = cost.edge_latency_ms(rec.size_bytes, i);
    if (kind.phase == Phase::kUplink) {
      if (downlink_seen) close();
      up = std::max(up, lat);
    } else {
      down = std::max(down, lat);
      downlink_seen = true;
    }
    open = true;
  }
  if (open) close();
  if (consensus) out.total_time_ms += static_cast<std::int64_t>(rounds) * cost.consensus_delay();
  return out;
}

std::string trace_to_csv(std::span<const TraceRecord> trace) {
  std::string out = kTraceHeader;
  out += '\n';
  for (const auto& r : trace) {
    out += std::to_string(r.time_ms) + ',' + r.src + ',' + r.dst + ',' + r.msg_type + ',' +
           std::to_string(r.size_bytes) + '\n';
  }
  return out;
}

std::vector<TraceRecord> trace_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw InputError("bad trace header");
  std::vector<TraceRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::string col;
    std::istringstream ls(line);
    while (std::getline(ls, col, ',')) cols.push_back(col);
    if (cols.size() != 5) {
      throw InputError("trace line " + std::to_string(lineno) + ": expected 5 columns");
    }
    TraceRecord r;
    try {
      std::size_t pos = 0;
      r.time_ms = std::stoll(cols[0], &pos);
      if (pos != cols[0].size()) throw std::invalid_argument("time");
      r.size_bytes = std::stoull(cols[4], &pos);
      if (pos != cols[4].size()) throw std::invalid_argument("size");
    } catch (const std::logic_error&) {
      throw InputError("trace line " + std::to_string(lineno) + ": bad number");
    }
    r.src = cols[1];
    r.dst = cols[2];
    r.msg_type = cols[3];
    message_kind(r.msg_type);
    out.push_back(std::move(r));
  }
  return out;
}

void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRecord> trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write trace " + path.string());
  out << trace_to_csv(trace);
}

std::vector<TraceRecord> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read trace " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return trace_from_csv(ss.str());
}

}  // namespace bfel
