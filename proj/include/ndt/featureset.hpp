#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "ndt/oracle.hpp"
#include "ndt/topology.hpp"
#include "ndt/traffic.hpp"

namespace ndt {

inline constexpr std::size_t kFlowFeatureDim = 5;
inline constexpr std::size_t kLinkFeatureDim = 2;

/// (avg traffic rate bits/s, path propagation delay s, flow length in hops,
///  packets sent, packet loss packets/s)
using FlowFeatures = std::array<double, kFlowFeatureDim>;
/// (capacity bits/s, load fraction)
using LinkFeatures = std::array<double, kLinkFeatureDim>;

namespace flow_feature {
inline constexpr std::size_t kTrafficRate = 0;
inline constexpr std::size_t kPropDelay = 1;
inline constexpr std::size_t kLength = 2;
inline constexpr std::size_t kPktsSent = 3;
inline constexpr std::size_t kPktLoss = 4;
}  // namespace flow_feature

namespace link_feature {
inline constexpr std::size_t kCapacity = 0;
inline constexpr std::size_t kLoad = 1;
}  // namespace link_feature

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

FlowFeatures extract_flow_features(const TopologyGraph& g, const FlowSpec& spec, const FlowOutcome& outcome);
LinkFeatures extract_link_features(const LinkDef& def, const LinkOutcome& outcome);

struct FlowNode {
  FlowFeatures x{};
  /// Local link-node indices in path order.
  std::vector<int> links;
};

struct LinkNode {
  LinkFeatures x{};
  /// Local flow-node indices, ascending.
  std::vector<int> flows;
  /// Link id in the topology.
  LinkIndex link_id = 0;
};

/// Bipartite flow/link incidence with raw (unnormalized) features.
struct HeteroGraph {
  std::vector<FlowNode> flows;
  std::vector<LinkNode> links;

  /// Throws GraphError unless flow t lists link l exactly when link l lists flow t.
  void check_duality() const;
};

/// One node per topology link (local index == link id), one per simulated flow.
HeteroGraph build_hypergraph(const SimResult& sim, const std::vector<FlowSpec>& flows, const TopologyGraph& g);

struct ZScoreStats {
  static constexpr double kMinStd = 1e-8;

  FlowFeatures flow_mean{};
  FlowFeatures flow_std{};
  LinkFeatures link_mean{};
  LinkFeatures link_std{};

  bool operator==(const ZScoreStats&) const = default;

  /// Mean 0, std 1: the identity transform.
  static ZScoreStats identity();
};

/// Population mean/std of each flow feature and of each link feature.
ZScoreStats zscore_fit(std::span<const FlowFeatures> flows, std::span<const LinkFeatures> links);

FlowFeatures zscore_apply(const ZScoreStats& s, const FlowFeatures& x);
LinkFeatures zscore_apply(const ZScoreStats& s, const LinkFeatures& x);
FlowFeatures zscore_invert(const ZScoreStats& s, const FlowFeatures& z);
LinkFeatures zscore_invert(const ZScoreStats& s, const LinkFeatures& z);

}  // namespace ndt
