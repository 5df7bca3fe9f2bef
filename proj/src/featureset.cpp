#include "ndt/featureset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ndt/labeling.hpp"

namespace ndt {

FlowFeatures extract_flow_features(const TopologyGraph& g, const FlowSpec& spec, const FlowOutcome& outcome) {
  FlowFeatures x{};
  x[flow_feature::kTrafficRate] = outcome.bits_sent / spec.duration_s;
  x[flow_feature::kPropDelay] = path_prop_delay(g, outcome.path);
  x[flow_feature::kLength] = static_cast<double>(outcome.path.size());
  x[flow_feature::kPktsSent] = static_cast<double>(outcome.pkts_sent);
  x[flow_feature::kPktLoss] = static_cast<double>(outcome.pkts_dropped) / spec.duration_s;
  return x;
}

LinkFeatures extract_link_features(const LinkDef& def, const LinkOutcome& outcome) {
  return {def.capacity_bps, outcome.load};
}

void HeteroGraph::check_duality() const {
  for (std::size_t t = 0; t < flows.size(); ++t) {
    for (int l : flows[t].links) {
      if (l < 0 || static_cast<std::size_t>(l) >= links.size()) {
        throw GraphError("flow " + std::to_string(t) + " references missing link node " + std::to_string(l));
      }
      const auto& fl = links[static_cast<std::size_t>(l)].flows;
      if (std::count(fl.begin(), fl.end(), static_cast<int>(t)) != 1) {
        throw GraphError("link node " + std::to_string(l) + " does not list flow " + std::to_string(t) + " once");
      }
    }
  }
  for (std::size_t l = 0; l < links.size(); ++l) {
    for (int t : links[l].flows) {
      if (t < 0 || static_cast<std::size_t>(t) >= flows.size()) {
        throw GraphError("link node " + std::to_string(l) + " references missing flow " + std::to_string(t));
      }
      const auto& fl = flows[static_cast<std::size_t>(t)].links;
      if (std::count(fl.begin(), fl.end(), static_cast<int>(l)) != 1) {
        throw GraphError("flow " + std::to_string(t) + " does not list link node " + std::to_string(l) + " once");
      }
    }
  }
}

HeteroGraph build_hypergraph(const SimResult& sim, const std::vector<FlowSpec>& flows, const TopologyGraph& g) {
  if (sim.flows.size() != flows.size()) {
    throw GraphError("simulation covers " + std::to_string(sim.flows.size()) + " flows, expected " +
                     std::to_string(flows.size()));
  }
  HeteroGraph hg;
  hg.links.resize(g.link_count());
  for (std::size_t l = 0; l < g.link_count(); ++l) {
    hg.links[l].link_id = static_cast<LinkIndex>(l);
    hg.links[l].x = extract_link_features(g.link(static_cast<LinkIndex>(l)), sim.links[l]);
  }
  hg.flows.resize(flows.size());
  for (std::size_t t = 0; t < flows.size(); ++t) {
    hg.flows[t].x = extract_flow_features(g, flows[t], sim.flows[t]);
    hg.flows[t].links.assign(sim.flows[t].path.begin(), sim.flows[t].path.end());
    for (LinkIndex l : sim.flows[t].path) hg.links[static_cast<std::size_t>(l)].flows.push_back(static_cast<int>(t));
  }
  hg.check_duality();
  return hg;
}

HeteroGraph build_hypergraph(std::span<const LabeledExample* const> examples) {
  std::map<LinkIndex, LinkFeatures> link_x;
  for (const auto* ex : examples) {
    for (std::size_t h = 0; h < ex->path.size(); ++h) link_x.emplace(ex->path[h], ex->link_context.at(h));
  }
  HeteroGraph hg;
  std::map<LinkIndex, int> local;
  for (const auto& [id, x] : link_x) {
    local[id] = static_cast<int>(hg.links.size());
    hg.links.push_back({x, {}, id});
  }
  hg.flows.resize(examples.size());
  for (std::size_t t = 0; t < examples.size(); ++t) {
    hg.flows[t].x = examples[t]->x_f;
    for (LinkIndex id : examples[t]->path) {
      const int l = local.at(id);
      hg.flows[t].links.push_back(l);
      hg.links[static_cast<std::size_t>(l)].flows.push_back(static_cast<int>(t));
    }
  }
  return hg;
}

HeteroGraph build_hypergraph(std::span<const LabeledExample> examples) {
  std::vector<const LabeledExample*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& ex : examples) ptrs.push_back(&ex);
  return build_hypergraph(std::span<const LabeledExample* const>(ptrs));
}

ZScoreStats ZScoreStats::identity() {
  ZScoreStats s;
  s.flow_std.fill(1.0);
  s.link_std.fill(1.0);
  return s;
}

namespace {

template <std::size_t N>
void fit_columns(std::span<const std::array<double, N>> rows, std::array<double, N>& mean, std::array<double, N>& sd) {
  const double n = static_cast<double>(rows.size());
  mean.fill(0.0);
  sd.fill(0.0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < N; ++c) mean[c] += r[c];
  }
  for (std::size_t c = 0; c < N; ++c) mean[c] /= n;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < N; ++c) sd[c] += (r[c] - mean[c]) * (r[c] - mean[c]);
  }
  for (std::size_t c = 0; c < N; ++c) sd[c] = std::sqrt(sd[c] / n);
}

template <std::size_t N>
std::array<double, N> apply(const std::array<double, N>& x, const std::array<double, N>& mean,
                            const std::array<double, N>& sd) {
  std::array<double, N> z{};
  for (std::size_t c = 0; c < N; ++c) z[c] = (x[c] - mean[c]) / std::max(sd[c], ZScoreStats::kMinStd);
  return z;
}

template <std::size_t N>
std::array<double, N> invert(const std::array<double, N>& z, const std::array<double, N>& mean,
                             const std::array<double, N>& sd) {
  std::array<double, N> x{};
  for (std::size_t c = 0; c < N; ++c) x[c] = z[c] * std::max(sd[c], ZScoreStats::kMinStd) + mean[c];
  return x;
}

}  // namespace

ZScoreStats zscore_fit(std::span<const FlowFeatures> flows, std::span<const LinkFeatures> links) {
  if (flows.size() < 2) throw std::invalid_argument("zscore_fit needs at least 2 flow examples");
  if (links.empty()) throw std::invalid_argument("zscore_fit needs at least 1 link example");
  ZScoreStats s;
  fit_columns<kFlowFeatureDim>(flows, s.flow_mean, s.flow_std);
  fit_columns<kLinkFeatureDim>(links, s.link_mean, s.link_std);
  return s;
}

ZScoreStats zscore_fit(std::span<const LabeledExample> examples) {
  std::vector<FlowFeatures> flows;
  std::vector<LinkFeatures> links;
  for (const auto& ex : examples) {
    flows.push_back(ex.x_f);
    links.insert(links.end(), ex.link_context.begin(), ex.link_context.end());
  }
  return zscore_fit(flows, links);
}

FlowFeatures zscore_apply(const ZScoreStats& s, const FlowFeatures& x) { return apply(x, s.flow_mean, s.flow_std); }
LinkFeatures zscore_apply(const ZScoreStats& s, const LinkFeatures& x) { return apply(x, s.link_mean, s.link_std); }
FlowFeatures zscore_invert(const ZScoreStats& s, const FlowFeatures& z) { return invert(z, s.flow_mean, s.flow_std); }
LinkFeatures zscore_invert(const ZScoreStats& s, const LinkFeatures& z) { return invert(z, s.link_mean, s.link_std); }

}  // namespace ndt
