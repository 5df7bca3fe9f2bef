#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ndt {

using NodeId = int;
using LinkIndex = int;
using Path = std::vector<LinkIndex>;

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RoutingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultBufferPackets = 64;

/// Full-duplex link between two switches. Each direction owns an
/// independent FIFO queue with the same capacity and buffer.
struct LinkDef {
  LinkIndex link_id = 0;
  NodeId src = 0;
  NodeId dst = 0;
  double capacity_bps = 0.0;
  double prop_delay_s = 0.0;
  int buffer_pkts = kDefaultBufferPackets;

  bool operator==(const LinkDef&) const = default;
};

/// One traversal of a link in a given direction.
struct Hop {
  LinkIndex link = 0;
  NodeId from = 0;
  NodeId to = 0;

  /// Queue index: 2 * link + (0 for src->dst, 1 for dst->src).
  int queue(const LinkDef& def) const { return 2 * link + (from == def.src ? 0 : 1); }
};

/// Immutable transport network graph. Construction validates every
/// invariant; a constructed graph is always consistent.
class TopologyGraph {
 public:
  TopologyGraph(std::string name, std::vector<NodeId> nodes, std::vector<LinkDef> links);

  const std::string& name() const { return name_; }
  const std::vector<NodeId>& nodes() const { return nodes_; }
  const std::vector<LinkDef>& links() const { return links_; }
  const LinkDef& link(LinkIndex id) const { return links_.at(static_cast<std::size_t>(id)); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t link_count() const { return links_.size(); }
  bool has_node(NodeId n) const;

  /// (neighbor, link) pairs sorted by neighbor id, then link id.
  const std::vector<std::pair<NodeId, LinkIndex>>& neighbors(NodeId n) const;

  bool operator==(const TopologyGraph& other) const {
    return name_ == other.name_ && nodes_ == other.nodes_ && links_ == other.links_;
  }

 private:
  std::size_t slot(NodeId n) const;

  std::string name_;
  std::vector<NodeId> nodes_;
  std::vector<LinkDef> links_;
  std::vector<NodeId> sorted_nodes_;
  std::vector<std::vector<std::pair<NodeId, LinkIndex>>> adjacency_;
};

TopologyGraph parse_topology(const nlohmann::json& doc);
nlohmann::json topology_to_json(const TopologyGraph& g);
TopologyGraph load_topology(const std::filesystem::path& path);
void save_topology(const TopologyGraph& g, const std::filesystem::path& path);

/// Minimal-hop path from `origin` to `destination`. Among equal-length
/// paths the one whose node sequence is lexicographically smallest wins,
/// i.e. every step takes the smallest next-node id that stays on a
/// shortest path.
Path shortest_path(const TopologyGraph& g, NodeId origin, NodeId destination);

/// Directed hops of a path that starts at `origin`.
std::vector<Hop> path_hops(const TopologyGraph& g, NodeId origin, const Path& path);

double path_prop_delay(const TopologyGraph& g, const Path& path);

}  // namespace ndt
