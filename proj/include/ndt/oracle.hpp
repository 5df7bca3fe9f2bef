#pragma once

#include <cstdint>
#include <vector>

#include "ndt/topology.hpp"
#include "ndt/traffic.hpp"

namespace ndt {

struct FlowOutcome {
  /// Mean end-to-end delay over delivered packets (the label y). NaN when
  /// nothing was delivered.
  double avg_delay_s = 0.0;
  std::int64_t pkts_sent = 0;
  std::int64_t pkts_delivered = 0;
  std::int64_t pkts_dropped = 0;
  double bits_sent = 0.0;
  Path path;
};

struct LinkOutcome {
  /// Busy fraction of the busier direction over the measurement window.
  double load = 0.0;
  /// Indices into SimResult::flows of the flows routed over this link, ascending.
  std::vector<int> flows;
  std::int64_t pkts_arrived = 0;
  std::int64_t pkts_forwarded = 0;
  std::int64_t pkts_dropped = 0;
};

struct SimResult {
  std::vector<FlowOutcome> flows;
  std::vector<LinkOutcome> links;
  double window_start_s = 0.0;
  double window_end_s = 0.0;
  /// Transmission intervals [start, end) per directed queue (2 * link + direction), in time order.
  std::vector<std::vector<std::pair<double, double>>> busy;
};

/// Packet-level FIFO simulation with tail drop, one queue per link
/// direction. Packet delay is the sum over hops of queueing wait,
/// transmission time and propagation delay. Randomness comes only from
/// packet sizes and gaps, drawn from `rng` in flow order before the event
/// loop runs.
SimResult simulate(const TopologyGraph& g, const std::vector<FlowSpec>& flows, Rng& rng);

/// Per-link load (busier direction) over [from_s, to_s).
std::vector<double> link_loads(const SimResult& sim, double from_s, double to_s);

}  // namespace ndt
