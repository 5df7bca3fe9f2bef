#include <doctest.h>

#include <functional>

#include "fixtures.hpp"

using namespace ndt;

namespace {

// Every simple path from o to d, as node sequences.
std::vector<std::vector<NodeId>> all_paths(const TopologyGraph& g, NodeId o, NodeId d) {
  std::vector<std::vector<NodeId>> out;
  std::vector<NodeId> cur{o};
  std::function<void(NodeId)> dfs = [&](NodeId at) {
    if (at == d) {
      out.push_back(cur);
      return;
    }
    for (auto [nb, l] : g.neighbors(at)) {
      if (std::find(cur.begin(), cur.end(), nb) != cur.end()) continue;
      cur.push_back(nb);
      dfs(nb);
      cur.pop_back();
    }
  };
  dfs(o);
  return out;
}

std::vector<NodeId> node_sequence(const TopologyGraph& g, NodeId o, const Path& p) {
  std::vector<NodeId> seq{o};
  for (const auto& h : path_hops(g, o, p)) seq.push_back(h.to);
  return seq;
}

}  // namespace

TEST_CASE("triangle parses with three nodes and links") {
  const auto doc = topology_to_json(fx::triangle());
  const auto g = parse_topology(doc);
  CHECK(g.node_count() == 3);
  CHECK(g.link_count() == 3);
  CHECK(g == fx::triangle());
}

TEST_CASE("link to an unknown node is rejected") {
  auto doc = topology_to_json(fx::triangle());
  doc["links"][1]["dst"] = 99;
  try {
    parse_topology(doc);
    FAIL("expected TopologyError");
  } catch (const TopologyError& e) {
    CHECK(std::string(e.what()).find("unknown node") != std::string::npos);
  }
}

TEST_CASE("bad link attributes are rejected") {
  CHECK_THROWS_AS(TopologyGraph("x", {0, 1}, {fx::link(0, 0, 0)}), TopologyError);
  CHECK_THROWS_AS(TopologyGraph("x", {0, 1}, {fx::link(0, 0, 1, 0.0)}), TopologyError);
  CHECK_THROWS_AS(TopologyGraph("x", {0, 1}, {fx::link(0, 0, 1, 1e6, -1.0)}), TopologyError);
  CHECK_THROWS_AS(TopologyGraph("x", {0, 0}, {fx::link(0, 0, 1)}), TopologyError);
  CHECK_THROWS_AS(TopologyGraph("x", {0, 1}, {fx::link(3, 0, 1)}), TopologyError);
}

TEST_CASE("bundled topologies") {
  const auto g50 = load_topology(fx::data_dir() / "topologies" / "germany50.json");
  CHECK(g50.node_count() == 50);
  CHECK(g50.link_count() == 63);
  const auto g51 = load_topology(fx::data_dir() / "topologies" / "crosshaul51.json");
  CHECK(g51.node_count() == 51);
  CHECK(g51.link_count() == 88);
  const auto g8 = load_topology(fx::synthetic8());
  CHECK(g8.node_count() == 8);
}

TEST_CASE("save and load round-trip") {
  fx::TempDir dir("topo");
  const auto g = load_topology(fx::synthetic8());
  save_topology(g, dir.path / "g.json");
  CHECK(load_topology(dir.path / "g.json") == g);
}

TEST_CASE("shortest path examples") {
  const auto tri = fx::triangle();
  CHECK(shortest_path(tri, 0, 1) == Path{0});

  const TopologyGraph line("line", {0, 1, 2}, {fx::link(0, 0, 1), fx::link(1, 1, 2)});
  CHECK(shortest_path(line, 0, 2) == Path{0, 1});
  CHECK(shortest_path(line, 2, 0) == Path{1, 0});

  // Square 0-1-3 and 0-2-3: the route through node 1 wins. Link ids are
  // ordered so that the smaller link id would pick node 2.
  const TopologyGraph sq("square", {0, 1, 2, 3},
                         {fx::link(0, 0, 2), fx::link(1, 2, 3), fx::link(2, 0, 1), fx::link(3, 1, 3)});
  CHECK(shortest_path(sq, 0, 3) == Path{2, 3});
  CHECK(path_prop_delay(sq, Path{2, 3}) == doctest::Approx(2e-3));
}

TEST_CASE("routing errors") {
  const auto tri = fx::triangle();
  CHECK_THROWS_AS(shortest_path(tri, 0, 0), RoutingError);
  CHECK_THROWS_AS(shortest_path(tri, 0, 7), RoutingError);
  const TopologyGraph split("split", {0, 1, 2, 3}, {fx::link(0, 0, 1), fx::link(1, 2, 3)});
  CHECK_THROWS_AS(shortest_path(split, 0, 3), RoutingError);
}

TEST_CASE("shortest path matches brute-force enumeration with the tie rule") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + trial % 6;
    const auto g = fx::random_graph(n, 1 + trial % 5, rng);
    for (NodeId o : g.nodes()) {
      for (NodeId d : g.nodes()) {
        if (o == d) continue;
        auto paths = all_paths(g, o, d);
        REQUIRE(!paths.empty());
        std::sort(paths.begin(), paths.end(), [](const auto& a, const auto& b) {
          return a.size() != b.size() ? a.size() < b.size() : a < b;
        });
        const Path p = shortest_path(g, o, d);
        const auto seq = node_sequence(g, o, p);
        CHECK(seq.back() == d);
        CHECK(seq == paths.front());
      }
    }
  }
}

TEST_CASE("hop queues use the traversal direction") {
  const auto tri = fx::triangle();
  const auto hops = path_hops(tri, 1, Path{0});
  REQUIRE(hops.size() == 1);
  CHECK(hops[0].from == 1);
  CHECK(hops[0].to == 0);
  CHECK(hops[0].queue(tri.link(0)) == 1);
  CHECK(path_hops(tri, 0, Path{0})[0].queue(tri.link(0)) == 0);
}
