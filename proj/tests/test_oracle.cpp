#include <doctest.h>

#include "fixtures.hpp"

using namespace ndt;

namespace {

FlowSpec flow(int id, NodeId o, NodeId d, double start, double dur, DistributionSpec size, DistributionSpec rate) {
  FlowSpec f;
  f.flow_id = id;
  f.origin = o;
  f.destination = d;
  f.start_s = start;
  f.duration_s = dur;
  f.packet_size = size;
  f.packet_rate = rate;
  return f;
}

const TopologyGraph& single_link() {
  static const TopologyGraph g("one", {0, 1}, {fx::link(0, 0, 1, 1e6, 1e-3)});
  return g;
}

}  // namespace

TEST_CASE("uncontended flow has the analytic delay") {
  const std::vector<FlowSpec> flows{
      flow(0, 0, 1, 0.0, 10.0, DistributionSpec::deterministic(512), DistributionSpec::deterministic(1))};
  Rng rng(1);
  const auto sim = simulate(single_link(), flows, rng);
  REQUIRE(sim.flows.size() == 1);
  CHECK(sim.flows[0].pkts_delivered == sim.flows[0].pkts_sent);
  CHECK(sim.flows[0].avg_delay_s == doctest::Approx(0.001 + 512.0 * 8 / 1e6).epsilon(1e-12));

  Rng rng2(1);
  const auto ex = label_dataset(single_link(), flows, rng2);
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].y == doctest::Approx(0.005096).epsilon(1e-12));
}

TEST_CASE("no flows gives an empty result") {
  Rng rng(1);
  const auto sim = simulate(single_link(), {}, rng);
  CHECK(sim.flows.empty());
  for (const auto& l : sim.links) {
    CHECK(l.pkts_arrived == 0);
    CHECK(l.load == 0.0);
  }
}

TEST_CASE("overload drops packets and saturates the link") {
  // Two flows at 0.75 x capacity each.
  const double rate = 0.75 * 1e6 / (512 * 8);
  const std::vector<FlowSpec> flows{
      flow(0, 0, 1, 0.0, 10.0, DistributionSpec::deterministic(512), DistributionSpec::deterministic(rate)),
      flow(1, 0, 1, 0.0, 10.0, DistributionSpec::deterministic(512), DistributionSpec::deterministic(rate))};
  Rng rng(4);
  const auto sim = simulate(single_link(), flows, rng);
  CHECK(sim.flows[0].pkts_dropped + sim.flows[1].pkts_dropped > 0);
  CHECK(sim.links[0].pkts_dropped > 0);
  CHECK(sim.links[0].load == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(sim.links[0].load <= 1.0);
}

TEST_CASE("conservation per flow and per link") {
  const auto g = load_topology(fx::synthetic8());
  auto sched = default_drift_schedule(80);
  Rng frng(7);
  const auto flows = generate_flows(g, sched, 5.0, frng);
  Rng rng(8);
  const auto sim = simulate(g, flows, rng);
  std::int64_t sent = 0, delivered = 0, dropped = 0;
  for (std::size_t f = 0; f < flows.size(); ++f) {
    const auto& o = sim.flows[f];
    CHECK(o.pkts_delivered + o.pkts_dropped == o.pkts_sent);
    CHECK(o.path == shortest_path(g, flows[f].origin, flows[f].destination));
    if (o.pkts_delivered > 0) CHECK(o.avg_delay_s >= path_prop_delay(g, o.path));
    sent += o.pkts_sent;
    delivered += o.pkts_delivered;
    dropped += o.pkts_dropped;
  }
  std::int64_t link_dropped = 0;
  for (std::size_t l = 0; l < sim.links.size(); ++l) {
    const auto& lo = sim.links[l];
    CHECK(lo.pkts_arrived == lo.pkts_forwarded + lo.pkts_dropped);
    CHECK(lo.load >= 0.0);
    CHECK(lo.load <= 1.0);
    CHECK(std::is_sorted(lo.flows.begin(), lo.flows.end()));
    link_dropped += lo.pkts_dropped;
  }
  CHECK(link_dropped == dropped);
  CHECK(sent == delivered + dropped);
}

TEST_CASE("delay grows with offered load") {
  const TopologyGraph& g = single_link();
  double prev = 0.0;
  for (double frac : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double rate = frac * 1e6 / (512 * 8);
    const std::vector<FlowSpec> flows{
        flow(0, 0, 1, 0.0, 20.0, DistributionSpec::deterministic(512), DistributionSpec::exponential(rate))};
    Rng rng(5);
    const auto sim = simulate(g, flows, rng);
    CHECK(sim.flows[0].avg_delay_s >= prev);
    prev = sim.flows[0].avg_delay_s;
    CHECK(sim.links[0].load == doctest::Approx(frac).epsilon(0.1));
  }
}

TEST_CASE("labels are deterministic per seed") {
  const auto g = load_topology(fx::synthetic8());
  const auto a = fx::labeled(g, 10.0, 5.0, 3);
  const auto b = fx::labeled(g, 10.0, 5.0, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].y == b[i].y);
    CHECK(a[i].x_f == b[i].x_f);
  }
  LabelStats stats;
  Rng frng(3);
  auto phase = default_drift_schedule(40).phase(0);
  const auto flows = generate_flows(g, ScenarioSchedule({phase}), 5.0, frng);
  Rng rng(4);
  const auto ex = label_dataset(g, flows, rng, &stats);
  CHECK(ex.size() + stats.undelivered_flows == flows.size());
}

TEST_CASE("window loads cover only the requested interval") {
  const double rate = 0.5 * 1e6 / (512 * 8);
  const std::vector<FlowSpec> flows{
      flow(0, 0, 1, 0.0, 10.0, DistributionSpec::deterministic(512), DistributionSpec::deterministic(rate))};
  Rng rng(1);
  const auto sim = simulate(single_link(), flows, rng);
  CHECK(link_loads(sim, 2.0, 8.0)[0] == doctest::Approx(0.5).epsilon(0.01));
  CHECK(link_loads(sim, 20.0, 30.0)[0] == 0.0);

  const auto part = label_window(single_link(), flows, sim, 0, 1, 20.0, 30.0);
  REQUIRE(part.size() == 1);
  CHECK(part[0].link_context[0][link_feature::kLoad] == 0.0);
  CHECK_THROWS(label_window(single_link(), flows, sim, 0, 2, 0.0, 1.0));
}
