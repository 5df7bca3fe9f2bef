#pragma once

#include <span>
#include <vector>

#include "ndt/featureset.hpp"
#include "ndt/oracle.hpp"

namespace ndt {

/// One flow with its features, route, per-hop link context and
/// ground-truth mean delay.
struct LabeledExample {
  FlowSpec flow;
  FlowFeatures x_f{};
  Path path;
  /// Features of each link of `path`, same order.
  std::vector<LinkFeatures> link_context;
  double y = 0.0;
  /// Groups examples that were simulated together.
  std::int64_t snapshot = 0;
};

struct LabelStats {
  /// Flows dropped from the dataset because none of their packets arrived.
  std::size_t undelivered_flows = 0;
};

std::vector<LabeledExample> label_dataset(const TopologyGraph& g, const std::vector<FlowSpec>& flows, Rng& rng,
                                          LabelStats* stats = nullptr);

std::vector<LabeledExample> label_from_sim(const TopologyGraph& g, const std::vector<FlowSpec>& flows,
                                           const SimResult& sim, LabelStats* stats = nullptr);

/// Examples for flows [begin, end) of a longer simulation, with link loads
/// measured over [from_s, to_s) instead of the whole run.
std::vector<LabeledExample> label_window(const TopologyGraph& g, const std::vector<FlowSpec>& flows,
                                         const SimResult& sim, std::size_t begin, std::size_t end, double from_s,
                                         double to_s, LabelStats* stats = nullptr);

/// Hypergraph over a set of labeled examples. Links are the union of the
/// examples' path links ordered by link id; flows keep the input order.
HeteroGraph build_hypergraph(std::span<const LabeledExample> examples);
HeteroGraph build_hypergraph(std::span<const LabeledExample* const> examples);

ZScoreStats zscore_fit(std::span<const LabeledExample> examples);

}  // namespace ndt
