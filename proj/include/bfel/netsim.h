#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bfel/bytes.h"
#include "bfel/digest.h"

namespace bfel {

// Communication cost abstraction. Edge links cost
// ceil(base_latency + size / bytes_per_ms) plus optional seeded jitter;
// committee links are free and their traffic is covered by the consensus
// delay charged once per PoV round.
struct CostModel {
  double bytes_per_ms = 1250.0;
  double base_latency_ms = 5.0;
  double consensus_delay_ms = 500.0;
  double jitter_ms = 0.0;
  std::uint64_t jitter_seed = 0;

  void validate() const;
  // `sequence` is the message's position in the trace; it keys the jitter.
  std::int64_t edge_latency_ms(std::uint64_t size_bytes, std::uint64_t sequence) const;
  std::int64_t consensus_delay() const;
};

enum class LinkClass { kEdge, kCommittee };
enum class Phase { kUplink, kDownlink, kOther };

struct MessageKind {
  std::string_view name;
  LinkClass link;
  Phase phase;
};

// Known message types. Throws InputError for an unknown name.
const MessageKind& message_kind(std::string_view name);
std::span<const MessageKind> message_kinds();

struct SimEvent {
  std::int64_t deliver_at = 0;
  std::int64_t sent_at = 0;
  std::string src;
  std::string dst;
  std::string msg_type;
  Bytes message;
  std::uint64_t size_bytes = 0;
  std::uint64_t seq = 0;
  bool timer = false;
};

struct TraceRecord {
  std::int64_t time_ms = 0;
  std::string src;
  std::string dst;
  std::string msg_type;
  std::uint64_t size_bytes = 0;

  bool operator==(const TraceRecord&) const = default;
};

// Min-queue on (deliver_at, insertion sequence).
class EventQueue {
 public:
  // Assigns the insertion sequence. Throws ProtocolError when the event is
  // due before the current time.
  void schedule(SimEvent event);
  SimEvent pop();
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  std::int64_t now() const { return now_; }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.deliver_at != b.deliver_at ? a.deliver_at > b.deliver_at : a.seq > b.seq;
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::int64_t now_ = 0;
  std::uint64_t next_seq_ = 0;
};

struct RunStats {
  std::size_t events = 0;
  bool condition_met = false;
};

class Simulator {
 public:
  using Handler = std::function<void(const SimEvent&)>;

  explicit Simulator(CostModel cost);

  void add_node(const std::string& id, Handler handler);
  bool has_node(const std::string& id) const { return nodes_.count(id) != 0; }
  std::int64_t now() const { return queue_.now(); }
  const CostModel& cost() const { return cost_; }

  // Records the message in the trace and returns its delivery time.
  std::int64_t send(const std::string& src, const std::string& dst, const std::string& msg_type,
                    Bytes message);
  // Latency the next send of `size_bytes` over `msg_type` would get.
  std::int64_t latency(const std::string& msg_type, std::uint64_t size_bytes,
                       std::uint64_t sequence) const;
  std::uint64_t next_sequence() const { return trace_.size(); }
  void set_timer(const std::string& node, std::int64_t at, const std::string& tag);

  // Messages for which `rule` returns true are traced but never delivered.
  void set_drop_rule(std::function<bool(const TraceRecord&)> rule) { drop_ = std::move(rule); }

  // Processes events in order until `stop` holds (checked before each event)
  // or the queue drains. Throws ProtocolError when `max_events` is exceeded.
  RunStats run_until(const std::function<bool()>& stop, std::size_t max_events = 50'000'000);

  const std::vector<TraceRecord>& trace() const { return trace_; }
  const std::vector<TraceRecord>& dropped() const { return dropped_; }
  std::uint64_t delivered() const { return delivered_; }
  Digest trace_digest() const;

 private:
  CostModel cost_;
  EventQueue queue_;
  std::map<std::string, Handler> nodes_;
  std::vector<TraceRecord> trace_;
  std::vector<TraceRecord> dropped_;
  std::function<bool(const TraceRecord&)> drop_;
  std::uint64_t delivered_ = 0;
};

struct CommunicationCost {
  std::int64_t total_time_ms = 0;
  std::uint64_t total_bytes = 0;
  // Rounds delimited by uplink/downlink phases in the trace.
  std::uint64_t rounds_observed = 0;
};

// Recomputes cost from a trace. Bytes sum every selected record. Time sums,
// per round, the slowest uplink plus the slowest downlink, and adds
// `rounds` consensus delays when `consensus` is set. Records rejected by
// `select` are skipped but keep their trace position for jitter.
CommunicationCost communication_cost(std::span<const TraceRecord> trace, const CostModel& cost,
                                     std::uint64_t rounds, bool consensus,
                                     const std::function<bool(const TraceRecord&)>& select = {});

std::string trace_to_csv(std::span<const TraceRecord> trace);
std::vector<TraceRecord> trace_from_csv(std::string_view text);
void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRecord> trace);
std::vector<TraceRecord> read_trace_csv(const std::filesystem::path& path);

}  // namespace bfel
