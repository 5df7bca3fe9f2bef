#include <doctest.h>

#include <numeric>

#include "fixtures.hpp"

using namespace ndt;

namespace {

LabeledExample on_path(Path p, double cap = 1e7) {
  LabeledExample ex;
  ex.path = std::move(p);
  for (std::size_t i = 0; i < ex.path.size(); ++i) ex.link_context.push_back({cap, 0.1 * static_cast<double>(i)});
  ex.x_f = {1e5, 1e-3, static_cast<double>(ex.path.size()), 10, 0};
  ex.y = 1e-2;
  return ex;
}

}  // namespace

TEST_CASE("two flows sharing the last link") {
  // f1 over e1 e2 e5, f2 over e3 e4 e5.
  const std::vector<LabeledExample> ex{on_path({1, 2, 5}), on_path({3, 4, 5})};
  const auto hg = build_hypergraph(std::span<const LabeledExample>(ex));
  hg.check_duality();
  REQUIRE(hg.links.size() == 5);
  CHECK(hg.links[4].link_id == 5);
  CHECK(hg.links[4].flows == std::vector<int>{0, 1});
  CHECK(hg.links[0].flows == std::vector<int>{0});
  CHECK(hg.flows[0].links == std::vector<int>{0, 1, 4});
  CHECK(hg.flows[1].links == std::vector<int>{2, 3, 4});
}

TEST_CASE("single flow on a single link") {
  const std::vector<LabeledExample> ex{on_path({0})};
  const auto hg = build_hypergraph(std::span<const LabeledExample>(ex));
  REQUIRE(hg.flows.size() == 1);
  REQUIRE(hg.links.size() == 1);
  CHECK(hg.flows[0].links == std::vector<int>{0});
  CHECK(hg.links[0].flows == std::vector<int>{0});
}

TEST_CASE("duality holds against an exhaustive incidence check") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = fx::random_graph(6, 3, rng);
    auto phase = default_drift_schedule(40).phase(0);
    phase.duration_s = 2.0;
    Rng frng(trial);
    const auto flows = generate_flows(g, ScenarioSchedule({phase}), 5.0, frng);
    REQUIRE(flows.size() == 10);
    Rng srng(trial + 100);
    const auto sim = simulate(g, flows, srng);
    const auto hg = build_hypergraph(sim, flows, g);
    for (std::size_t t = 0; t < hg.flows.size(); ++t) {
      for (std::size_t l = 0; l < hg.links.size(); ++l) {
        const auto& fl = hg.flows[t].links;
        const auto& lf = hg.links[l].flows;
        const bool a = std::find(fl.begin(), fl.end(), static_cast<int>(l)) != fl.end();
        const bool b = std::find(lf.begin(), lf.end(), static_cast<int>(t)) != lf.end();
        CHECK(a == b);
      }
      CHECK(hg.flows[t].x[flow_feature::kLength] ==
            static_cast<double>(shortest_path(g, flows[t].origin, flows[t].destination).size()));
    }
  }
}

TEST_CASE("broken incidence is reported") {
  HeteroGraph hg;
  hg.flows.resize(1);
  hg.links.resize(1);
  hg.flows[0].links = {0};
  CHECK_THROWS_AS(hg.check_duality(), GraphError);
  hg.links[0].flows = {0, 0};
  CHECK_THROWS_AS(hg.check_duality(), GraphError);
  hg.links[0].flows = {0};
  CHECK_NOTHROW(hg.check_duality());
}

TEST_CASE("flow features") {
  const auto g = load_topology(fx::synthetic8());
  const auto ex = fx::labeled(g, 20.0, 5.0, 2);
  REQUIRE(!ex.empty());
  for (const auto& e : ex) {
    CHECK(e.x_f[flow_feature::kTrafficRate] > 0.0);
    CHECK(e.x_f[flow_feature::kPropDelay] == doctest::Approx(path_prop_delay(g, e.path)));
    CHECK(e.x_f[flow_feature::kLength] == static_cast<double>(e.path.size()));
    CHECK(e.x_f[flow_feature::kPktLoss] >= 0.0);
    REQUIRE(e.link_context.size() == e.path.size());
    for (std::size_t h = 0; h < e.path.size(); ++h) {
      CHECK(e.link_context[h][link_feature::kCapacity] == g.link(e.path[h]).capacity_bps);
    }
  }
}

TEST_CASE("z-score examples") {
  const std::vector<FlowFeatures> flows{{1, 5, 0, 0, 0}, {3, 5, 0, 0, 0}};
  const std::vector<LinkFeatures> links{{2, 0}};
  const auto s = zscore_fit(flows, links);
  CHECK(s.flow_mean[0] == 2.0);
  CHECK(s.flow_std[0] == 1.0);
  CHECK(zscore_apply(s, flows[0])[0] == -1.0);
  CHECK(zscore_apply(s, flows[1])[0] == 1.0);
  // Constant column.
  CHECK(zscore_apply(s, flows[0])[1] == 0.0);
  CHECK(zscore_apply(s, flows[1])[1] == 0.0);
  CHECK_THROWS(zscore_fit(std::span<const FlowFeatures>(flows.data(), 1), links));
}

TEST_CASE("normalized columns have zero mean and invert exactly enough") {
  const auto g = load_topology(fx::synthetic8());
  const auto ex = fx::labeled(g, 20.0, 5.0, 4);
  const auto s = zscore_fit(std::span<const LabeledExample>(ex));
  FlowFeatures sum{};
  for (const auto& e : ex) {
    const auto z = zscore_apply(s, e.x_f);
    for (std::size_t c = 0; c < kFlowFeatureDim; ++c) sum[c] += z[c];
    const auto back = zscore_invert(s, z);
    for (std::size_t c = 0; c < kFlowFeatureDim; ++c) CHECK(back[c] == doctest::Approx(e.x_f[c]));
  }
  for (double v : sum) CHECK(std::abs(v / static_cast<double>(ex.size())) < 1e-12);
}
