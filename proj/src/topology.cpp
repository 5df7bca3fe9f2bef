#include "ndt/topology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <set>

namespace ndt {

TopologyGraph::TopologyGraph(std::string name, std::vector<NodeId> nodes, std::vector<LinkDef> links)
    : name_(std::move(name)), nodes_(std::move(nodes)), links_(std::move(links)) {
  if (nodes_.size() < 2) {
    throw TopologyError("topology '" + name_ + "': needs at least 2 nodes");
  }
  if (links_.empty()) {
    throw TopologyError("topology '" + name_ + "': needs at least 1 link");
  }
  sorted_nodes_ = nodes_;
  std::sort(sorted_nodes_.begin(), sorted_nodes_.end());
  for (std::size_t i = 0; i < sorted_nodes_.size(); ++i) {
    if (sorted_nodes_[i] < 0) {
      throw TopologyError("negative node id " + std::to_string(sorted_nodes_[i]));
    }
    if (i > 0 && sorted_nodes_[i] == sorted_nodes_[i - 1]) {
      throw TopologyError("duplicate node " + std::to_string(sorted_nodes_[i]));
    }
  }

  std::vector<bool> seen(links_.size(), false);
  for (const auto& l : links_) {
    const std::string tag = "link " + std::to_string(l.link_id);
    if (l.link_id < 0 || static_cast<std::size_t>(l.link_id) >= links_.size()) {
      throw TopologyError(tag + ": id out of dense range 0.." + std::to_string(links_.size() - 1));
    }
    if (seen[static_cast<std::size_t>(l.link_id)]) {
      throw TopologyError(tag + ": duplicate link id");
    }
    seen[static_cast<std::size_t>(l.link_id)] = true;
    if (!has_node(l.src)) throw TopologyError(tag + ": unknown node " + std::to_string(l.src));
    if (!has_node(l.dst)) throw TopologyError(tag + ": unknown node " + std::to_string(l.dst));
    if (l.src == l.dst) throw TopologyError(tag + ": self-loop on node " + std::to_string(l.src));
    if (!(l.capacity_bps > 0.0)) throw TopologyError(tag + ": capacity must be > 0");
    if (!(l.prop_delay_s >= 0.0)) throw TopologyError(tag + ": prop_delay must be >= 0");
    if (l.buffer_pkts < 1) throw TopologyError(tag + ": buffer must be >= 1 packet");
  }
  // Store links by id so link(id) is a direct lookup.
  std::sort(links_.begin(), links_.end(), [](const LinkDef& a, const LinkDef& b) { return a.link_id < b.link_id; });

  adjacency_.resize(sorted_nodes_.size());
  for (const auto& l : links_) {
    adjacency_[slot(l.src)].emplace_back(l.dst, l.link_id);
    adjacency_[slot(l.dst)].emplace_back(l.src, l.link_id);
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
}

bool TopologyGraph::has_node(NodeId n) const {
  return std::binary_search(sorted_nodes_.begin(), sorted_nodes_.end(), n);
}

std::size_t TopologyGraph::slot(NodeId n) const {
  auto it = std::lower_bound(sorted_nodes_.begin(), sorted_nodes_.end(), n);
  if (it == sorted_nodes_.end() || *it != n) {
    throw TopologyError("unknown node " + std::to_string(n));
  }
  return static_cast<std::size_t>(it - sorted_nodes_.begin());
}

const std::vector<std::pair<NodeId, LinkIndex>>& TopologyGraph::neighbors(NodeId n) const {
  return adjacency_[slot(n)];
}

TopologyGraph parse_topology(const nlohmann::json& doc) {
  try {
    std::string name = doc.at("name").get<std::string>();
    auto nodes = doc.at("nodes").get<std::vector<NodeId>>();
    std::vector<LinkDef> links;
    for (const auto& jl : doc.at("links")) {
      LinkDef l;
      l.link_id = jl.at("id").get<int>();
      l.src = jl.at("src").get<int>();
      l.dst = jl.at("dst").get<int>();
      l.capacity_bps = jl.at("capacity_bps").get<double>();
      l.prop_delay_s = jl.at("prop_delay_s").get<double>();
      l.buffer_pkts = jl.value("buffer_pkts", kDefaultBufferPackets);
      links.push_back(l);
    }
    return TopologyGraph(std::move(name), std::move(nodes), std::move(links));
  } catch (const nlohmann::json::exception& e) {
    throw TopologyError(std::string("topology parse error: ") + e.what());
  }
}

nlohmann::json topology_to_json(const TopologyGraph& g) {
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : g.links()) {
    links.push_back({{"id", l.link_id},
                     {"src", l.src},
                     {"dst", l.dst},
                     {"capacity_bps", l.capacity_bps},
                     {"prop_delay_s", l.prop_delay_s},
                     {"buffer_pkts", l.buffer_pkts}});
  }
  return {{"name", g.name()}, {"nodes", g.nodes()}, {"links", links}};
}

TopologyGraph load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TopologyError("cannot open topology file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw TopologyError("topology parse error in " + path.string() + ": " + e.what());
  }
  return parse_topology(doc);
}

void save_topology(const TopologyGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TopologyError("cannot write topology file " + path.string());
  out << topology_to_json(g).dump(2) << '\n';
}

Path shortest_path(const TopologyGraph& g, NodeId origin, NodeId destination) {
  if (!g.has_node(origin)) throw RoutingError("unknown origin node " + std::to_string(origin));
  if (!g.has_node(destination)) throw RoutingError("unknown destination node " + std::to_string(destination));
  if (origin == destination) throw RoutingError("origin equals destination (" + std::to_string(origin) + ")");

  // BFS distances towards the destination, then walk greedily from the origin.
  const auto& nodes = g.nodes();
  NodeId max_id = *std::max_element(nodes.begin(), nodes.end());
  constexpr int kUnreached = std::numeric_limits<int>::max();
  std::vector<int> dist(static_cast<std::size_t>(max_id) + 1, kUnreached);
  std::deque<NodeId> frontier{destination};
  dist[static_cast<std::size_t>(destination)] = 0;
  while (!frontier.empty()) {
    NodeId u = frontier.front();
    frontier.pop_front();
    for (const auto& [v, link] : g.neighbors(u)) {
      if (dist[static_cast<std::size_t>(v)] == kUnreached) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        frontier.push_back(v);
      }
    }
  }
  if (dist[static_cast<std::size_t>(origin)] == kUnreached) {
    throw RoutingError("destination " + std::to_string(destination) + " unreachable from " + std::to_string(origin));
  }

  Path path;
  NodeId at = origin;
  while (at != destination) {
    const int want = dist[static_cast<std::size_t>(at)] - 1;
    // neighbors() is sorted by (neighbor, link), so the first hit is the tie-break winner.
    for (const auto& [v, link] : g.neighbors(at)) {
      if (dist[static_cast<std::size_t>(v)] == want) {
        path.push_back(link);
        at = v;
        break;
      }
    }
  }
  return path;
}

std::vector<Hop> path_hops(const TopologyGraph& g, NodeId origin, const Path& path) {
  std::vector<Hop> hops;
  hops.reserve(path.size());
  NodeId at = origin;
  for (LinkIndex id : path) {
    const auto& l = g.link(id);
    NodeId next;
    if (l.src == at) {
      next = l.dst;
    } else if (l.dst == at) {
      next = l.src;
    } else {
      throw RoutingError("link " + std::to_string(id) + " does not touch node " + std::to_string(at));
    }
    hops.push_back({id, at, next});
    at = next;
  }
  return hops;
}

double path_prop_delay(const TopologyGraph& g, const Path& path) {
  double total = 0.0;
  for (LinkIndex id : path) total += g.link(id).prop_delay_s;
  return total;
}

}  // namespace ndt
