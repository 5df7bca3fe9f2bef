#include "ndt/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>

#include "ndt/labeling.hpp"

namespace ndt {

namespace {

struct Packet {
  int flow = 0;
  int size_bytes = 0;
  double created = 0.0;
};

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;
  std::uint32_t packet = 0;
  std::uint32_t hop = 0;

  bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

struct QueueState {
  double capacity_bps = 0.0;
  double prop_delay_s = 0.0;
  std::size_t buffer = 0;
  double free_at = -std::numeric_limits<double>::infinity();
  std::deque<double> in_system;  // finish times of accepted packets
};

}  // namespace

SimResult simulate(const TopologyGraph& g, const std::vector<FlowSpec>& flows, Rng& rng) {
  SimResult result;
  result.links.resize(g.link_count());
  result.busy.resize(2 * g.link_count());
  if (flows.empty()) return result;

  // Routes and queue sequences per flow.
  std::vector<std::vector<int>> queues_of(flows.size());
  result.flows.resize(flows.size());
  double ws = std::numeric_limits<double>::infinity();
  double we = -std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < flows.size(); ++f) {
    const auto& spec = flows[f];
    auto& out = result.flows[f];
    out.path = shortest_path(g, spec.origin, spec.destination);
    for (const auto& hop : path_hops(g, spec.origin, out.path)) {
      queues_of[f].push_back(hop.queue(g.link(hop.link)));
      result.links[static_cast<std::size_t>(hop.link)].flows.push_back(static_cast<int>(f));
    }
    ws = std::min(ws, spec.start_s);
    we = std::max(we, spec.start_s + spec.duration_s);
  }
  result.window_start_s = ws;
  result.window_end_s = we;

  std::vector<Packet> packets;
  for (std::size_t f = 0; f < flows.size(); ++f) {
    const auto& spec = flows[f];
    const double end = spec.start_s + spec.duration_s;
    for (double t = spec.start_s; t < end; t += sample_interarrival(spec.packet_rate, rng)) {
      const int size = sample_packet_size(spec.packet_size, rng);
      packets.push_back({static_cast<int>(f), size, t});
      auto& out = result.flows[f];
      ++out.pkts_sent;
      out.bits_sent += 8.0 * size;
    }
  }

  std::vector<QueueState> qs(2 * g.link_count());
  for (const auto& l : g.links()) {
    for (int dir = 0; dir < 2; ++dir) {
      auto& q = qs[static_cast<std::size_t>(2 * l.link_id + dir)];
      q.capacity_bps = l.capacity_bps;
      q.prop_delay_s = l.prop_delay_s;
      q.buffer = static_cast<std::size_t>(l.buffer_pkts);
    }
  }

  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  std::uint64_t seq = 0;
  for (std::size_t p = 0; p < packets.size(); ++p) {
    events.push({packets[p].created, seq++, static_cast<std::uint32_t>(p), 0});
  }

  std::vector<double> delay_sum(flows.size(), 0.0);
  while (!events.empty()) {
    const Event ev = events.top();
    events.pop();
    const Packet& pkt = packets[ev.packet];
    const auto& route = queues_of[static_cast<std::size_t>(pkt.flow)];
    auto& flow_out = result.flows[static_cast<std::size_t>(pkt.flow)];

    if (ev.hop == route.size()) {
      ++flow_out.pkts_delivered;
      delay_sum[static_cast<std::size_t>(pkt.flow)] += ev.time - pkt.created;
      continue;
    }

    const int qi = route[ev.hop];
    auto& q = qs[static_cast<std::size_t>(qi)];
    auto& link_out = result.links[static_cast<std::size_t>(qi / 2)];
    ++link_out.pkts_arrived;
    while (!q.in_system.empty() && q.in_system.front() <= ev.time) q.in_system.pop_front();
    if (q.in_system.size() >= q.buffer) {
      ++link_out.pkts_dropped;
      ++flow_out.pkts_dropped;
      continue;
    }
    ++link_out.pkts_forwarded;
    const double start = std::max(ev.time, q.free_at);
    const double finish = start + 8.0 * pkt.size_bytes / q.capacity_bps;
    q.free_at = finish;
    q.in_system.push_back(finish);
    result.busy[static_cast<std::size_t>(qi)].emplace_back(start, finish);
    events.push({finish + q.prop_delay_s, seq++, ev.packet, ev.hop + 1});
  }

  for (std::size_t f = 0; f < flows.size(); ++f) {
    auto& out = result.flows[f];
    out.avg_delay_s = out.pkts_delivered > 0 ? delay_sum[f] / static_cast<double>(out.pkts_delivered)
                                             : std::numeric_limits<double>::quiet_NaN();
  }
  const auto loads = link_loads(result, ws, we);
  for (std::size_t l = 0; l < result.links.size(); ++l) result.links[l].load = loads[l];
  return result;
}

std::vector<double> link_loads(const SimResult& sim, double from_s, double to_s) {
  std::vector<double> loads(sim.links.size(), 0.0);
  const double window = to_s - from_s;
  if (!(window > 0.0)) return loads;
  for (std::size_t q = 0; q < sim.busy.size(); ++q) {
    const auto& iv = sim.busy[q];
    // Intervals of one FIFO queue are disjoint and ordered.
    auto it = std::lower_bound(iv.begin(), iv.end(), from_s,
                               [](const std::pair<double, double>& a, double t) { return a.second <= t; });
    double busy = 0.0;
    for (; it != iv.end() && it->first < to_s; ++it) busy += std::min(it->second, to_s) - std::max(it->first, from_s);
    loads[q / 2] = std::max(loads[q / 2], std::clamp(busy / window, 0.0, 1.0));
  }
  return loads;
}

std::vector<LabeledExample> label_dataset(const TopologyGraph& g, const std::vector<FlowSpec>& flows, Rng& rng,
                                          LabelStats* stats) {
  const SimResult sim = simulate(g, flows, rng);
  return label_from_sim(g, flows, sim, stats);
}

namespace {

std::vector<LabeledExample> label_range(const TopologyGraph& g, const std::vector<FlowSpec>& flows,
                                        const SimResult& sim, std::size_t begin, std::size_t end,
                                        const std::vector<double>& loads, LabelStats* stats) {
  std::vector<LabeledExample> out;
  out.reserve(end - begin);
  std::size_t skipped = 0;
  for (std::size_t f = begin; f < end; ++f) {
    const auto& outcome = sim.flows[f];
    if (!(outcome.pkts_delivered > 0)) {
      ++skipped;
      continue;
    }
    LabeledExample ex;
    ex.flow = flows[f];
    ex.x_f = extract_flow_features(g, flows[f], outcome);
    ex.path = outcome.path;
    for (LinkIndex id : outcome.path) {
      LinkOutcome lo;
      lo.load = loads[static_cast<std::size_t>(id)];
      ex.link_context.push_back(extract_link_features(g.link(id), lo));
    }
    ex.y = outcome.avg_delay_s;
    out.push_back(std::move(ex));
  }
  if (stats) stats->undelivered_flows = skipped;
  return out;
}

}  // namespace

std::vector<LabeledExample> label_from_sim(const TopologyGraph& g, const std::vector<FlowSpec>& flows,
                                           const SimResult& sim, LabelStats* stats) {
  std::vector<double> loads;
  for (const auto& l : sim.links) loads.push_back(l.load);
  return label_range(g, flows, sim, 0, flows.size(), loads, stats);
}

std::vector<LabeledExample> label_window(const TopologyGraph& g, const std::vector<FlowSpec>& flows,
                                         const SimResult& sim, std::size_t begin, std::size_t end, double from_s,
                                         double to_s, LabelStats* stats) {
  if (begin > end || end > flows.size() || sim.flows.size() != flows.size()) {
    throw std::out_of_range("label_window: flow range outside the simulation");
  }
  return label_range(g, flows, sim, begin, end, link_loads(sim, from_s, to_s), stats);
}

}  // namespace ndt
