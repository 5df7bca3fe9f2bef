#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ndt/labeling.hpp"
#include "ndt/topology.hpp"
#include "ndt/traffic.hpp"
#include "ndt/training.hpp"
#include "ndt/vtwin.hpp"

#ifndef NDT_DATA_DIR
#define NDT_DATA_DIR "data"
#endif

namespace fx {

inline std::filesystem::path data_dir() { return NDT_DATA_DIR; }
inline std::filesystem::path synthetic8() { return data_dir() / "topologies" / "synthetic8.json"; }

inline ndt::LinkDef link(int id, int a, int b, double cap = 1e7, double prop = 1e-3) {
  ndt::LinkDef l;
  l.link_id = id;
  l.src = a;
  l.dst = b;
  l.capacity_bps = cap;
  l.prop_delay_s = prop;
  return l;
}

inline ndt::TopologyGraph triangle() {
  return ndt::TopologyGraph("triangle", {0, 1, 2}, {link(0, 0, 1), link(1, 1, 2), link(2, 2, 0)});
}

/// n-node ring; link i joins i and i+1 mod n, capacities cycle over 5/8/10 Mbps.
inline ndt::TopologyGraph ring(int n) {
  std::vector<ndt::NodeId> nodes;
  std::vector<ndt::LinkDef> links;
  const double caps[] = {5e6, 8e6, 1e7};
  for (int i = 0; i < n; ++i) {
    nodes.push_back(i);
    links.push_back(link(i, i, (i + 1) % n, caps[i % 3], 1e-3 * (1 + i % 4)));
  }
  return ndt::TopologyGraph("ring" + std::to_string(n), nodes, links);
}

/// Random connected graph: a random spanning tree plus `extra` chords.
inline ndt::TopologyGraph random_graph(int n, int extra, std::mt19937_64& rng) {
  std::vector<ndt::NodeId> nodes;
  for (int i = 0; i < n; ++i) nodes.push_back(i);
  std::vector<ndt::LinkDef> links;
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  auto add = [&](int a, int b) {
    adj[a][b] = adj[b][a] = true;
    links.push_back(link(static_cast<int>(links.size()), a, b, 1e7, 1e-3));
  };
  for (int i = 1; i < n; ++i) add(std::uniform_int_distribution<int>(0, i - 1)(rng), i);
  for (int tries = 0; tries < 100 && extra > 0; ++tries) {
    const int a = std::uniform_int_distribution<int>(0, n - 1)(rng);
    const int b = std::uniform_int_distribution<int>(0, n - 1)(rng);
    if (a == b || adj[a][b]) continue;
    add(a, b);
    --extra;
  }
  return ndt::TopologyGraph("random", nodes, links);
}

/// Labeled flows from a run of the Exponential phase alone.
inline std::vector<ndt::LabeledExample> labeled(const ndt::TopologyGraph& g, double seconds, double fps,
                                                std::uint64_t seed) {
  auto phase = ndt::default_drift_schedule(4 * seconds).phase(0);
  phase.duration_s = seconds;
  ndt::Rng rng(seed);
  const auto flows = ndt::generate_flows(g, ndt::ScenarioSchedule({phase}), fps, rng);
  ndt::Rng sim(seed + 1);
  return ndt::label_dataset(g, flows, sim);
}

/// Weights with random (nonzero) biases so every tensor carries gradient.
inline ndt::ModelWeights random_weights(std::uint64_t seed, const ndt::ModelConfig& cfg = {}) {
  ndt::Rng rng(seed);
  auto w = ndt::init_weights(rng, cfg);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int t = 0; t < ndt::kTensorCount; ++t) {
    auto id = static_cast<ndt::TensorId>(t);
    if (w.layout[t].is_bias()) {
      for (double& v : w.tensor(id)) v = u(rng);
    }
  }
  return w;
}

/// Small gradient-check instances: 1 to 5 flows on a 6-link ring, with
/// weights scaled to the data.
struct MicroInstance {
  std::vector<ndt::LabeledExample> batch;
  ndt::ModelWeights w;
};

inline std::vector<MicroInstance> micro_instances(std::size_t count, std::uint64_t seed = 1) {
  const auto g = ring(6);
  const auto ex = labeled(g, 60.0, 2.0, seed);
  std::vector<MicroInstance> out;
  std::size_t at = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = 1 + i % 5;
    if (at + n > ex.size()) at = 0;
    MicroInstance mi;
    mi.batch.assign(ex.begin() + static_cast<std::ptrdiff_t>(at), ex.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
    mi.w = random_weights(seed * 1000 + i);
    mi.w.stats = ndt::zscore_fit(std::span<const ndt::LabeledExample>(ex));
    std::vector<const ndt::LabeledExample*> ptrs;
    for (const auto& e : ex) ptrs.push_back(&e);
    mi.w.occupancy_unit = ndt::fit_occupancy_unit(ptrs);
    out.push_back(std::move(mi));
  }
  return out;
}

// New flow i is old flow fperm[i]; new link j is old link lperm[j].
inline ndt::HeteroGraph permute(const ndt::HeteroGraph& hg, const std::vector<int>& fperm,
                                const std::vector<int>& lperm) {
  std::vector<int> finv(fperm.size()), linv(lperm.size());
  for (std::size_t i = 0; i < fperm.size(); ++i) finv[static_cast<std::size_t>(fperm[i])] = static_cast<int>(i);
  for (std::size_t j = 0; j < lperm.size(); ++j) linv[static_cast<std::size_t>(lperm[j])] = static_cast<int>(j);
  ndt::HeteroGraph out;
  for (int old : fperm) {
    ndt::FlowNode f = hg.flows[static_cast<std::size_t>(old)];
    for (int& l : f.links) l = linv[static_cast<std::size_t>(l)];
    out.flows.push_back(f);
  }
  for (int old : lperm) {
    ndt::LinkNode l = hg.links[static_cast<std::size_t>(old)];
    for (int& t : l.flows) t = finv[static_cast<std::size_t>(t)];
    std::sort(l.flows.begin(), l.flows.end());
    out.links.push_back(l);
  }
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("ndt_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace fx
