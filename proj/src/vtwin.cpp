#include "ndt/vtwin.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace ndt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
using MutMat = Eigen::Map<MatrixXd>;
using MutVec = Eigen::Map<VectorXd>;

template <class S>
struct ParamView {
  const S* base;
  const std::vector<TensorShape>* layout;

  Eigen::Map<const Mat<S>> mat(TensorId id) const {
    const auto& s = (*layout)[id];
    return {base + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Vec<S>> vec(TensorId id) const {
    const auto& s = (*layout)[id];
    return {base + s.offset, s.rows};
  }
};

struct GradView {
  double* base;
  const std::vector<TensorShape>* layout;

  MutMat mat(TensorId id) const {
    const auto& s = (*layout)[id];
    return {base + s.offset, s.rows, s.cols};
  }
  MutVec vec(TensorId id) const {
    const auto& s = (*layout)[id];
    return {base + s.offset, s.rows};
  }
};

struct GruIds {
  TensorId wz, uz, bz, wr, ur, br, wh, uh, bh;
};

constexpr GruIds kFlowGru{kFlowGruWz, kFlowGruUz, kFlowGruBz, kFlowGruWr, kFlowGruUr,
                          kFlowGruBr, kFlowGruWh, kFlowGruUh, kFlowGruBh};
constexpr GruIds kLinkGru{kLinkGruWz, kLinkGruUz, kLinkGruBz, kLinkGruWr, kLinkGruUr,
                          kLinkGruBr, kLinkGruWh, kLinkGruUh, kLinkGruBh};

template <class S>
Vec<S> sigmoid(const Vec<S>& a) {
  return a.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
}

template <class S>
Vec<S> relu(const Vec<S>& a) {
  return a.cwiseMax(S(0));
}

VectorXd relu_mask(const VectorXd& pre, const VectorXd& upstream) {
  return upstream.binaryExpr(pre, [](double g, double p) { return p > 0.0 ? g : 0.0; });
}

template <class S>
S softplus(S x) {
  return std::max(x, S(0)) + std::log1p(std::exp(-std::abs(x)));
}
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class S>
struct GruCache {
  Vec<S> x, h, z, r, hc;
};

template <class S>
Vec<S> gru_forward(const ParamView<S>& p, const GruIds& g, const Vec<S>& x, const Vec<S>& h, GruCache<S>* cache) {
  Vec<S> z = sigmoid<S>(p.mat(g.wz) * x + p.mat(g.uz) * h + p.vec(g.bz));
  Vec<S> r = sigmoid<S>(p.mat(g.wr) * x + p.mat(g.ur) * h + p.vec(g.br));
  Vec<S> hc = (p.mat(g.wh) * x + p.mat(g.uh) * r.cwiseProduct(h) + p.vec(g.bh)).array().tanh().matrix();
  Vec<S> out = h + z.cwiseProduct(hc - h);
  if (cache) *cache = {x, h, std::move(z), std::move(r), std::move(hc)};
  return out;
}

/// Backprop through one GRU step; returns gradients w.r.t. input and previous hidden state.
void gru_backward(const ParamView<double>& p, const GradView& gp, const GruIds& g, const GruCache<double>& c,
                  const VectorXd& dout, VectorXd& dx, VectorXd& dh) {
  const VectorXd dhc = dout.cwiseProduct(c.z);
  const VectorXd dz = dout.cwiseProduct(c.hc - c.h);
  dh = dout.cwiseProduct(VectorXd::Ones(c.z.size()) - c.z);

  const VectorXd dah = dhc.cwiseProduct(VectorXd::Ones(c.hc.size()) - c.hc.cwiseProduct(c.hc));
  const VectorXd rh = c.r.cwiseProduct(c.h);
  gp.mat(g.wh).noalias() += dah * c.x.transpose();
  gp.mat(g.uh).noalias() += dah * rh.transpose();
  gp.vec(g.bh) += dah;
  dx = p.mat(g.wh).transpose() * dah;
  const VectorXd drh = p.mat(g.uh).transpose() * dah;
  const VectorXd dr = drh.cwiseProduct(c.h);
  dh += drh.cwiseProduct(c.r);

  const VectorXd daz = dz.cwiseProduct(c.z).cwiseProduct(VectorXd::Ones(c.z.size()) - c.z);
  const VectorXd dar = dr.cwiseProduct(c.r).cwiseProduct(VectorXd::Ones(c.r.size()) - c.r);
  gp.mat(g.wz).noalias() += daz * c.x.transpose();
  gp.mat(g.uz).noalias() += daz * c.h.transpose();
  gp.vec(g.bz) += daz;
  gp.mat(g.wr).noalias() += dar * c.x.transpose();
  gp.mat(g.ur).noalias() += dar * c.h.transpose();
  gp.vec(g.br) += dar;
  dx.noalias() += p.mat(g.wz).transpose() * daz + p.mat(g.wr).transpose() * dar;
  dh.noalias() += p.mat(g.uz).transpose() * daz + p.mat(g.ur).transpose() * dar;
}

template <class S>
struct AttnCache {
  std::vector<int> order;  // neighbor positions in canonical summation order
  Vec<S> query;
  std::vector<Vec<S>> keys;  // by position
  std::vector<S> alpha;      // by position
};

/// Attention weights over `neighbors` (input order). Sums run in an order
/// fixed by the values themselves, so relabeling flows cannot change a bit.
template <class S>
std::vector<S> attention_weights(const ParamView<S>& p, const Vec<S>& link_state,
                                 const std::vector<const Vec<S>*>& neighbors, AttnCache<S>* cache) {
  const auto wq = p.mat(kAttnQuery);
  const auto wk = p.mat(kAttnKey);
  const S scale = S(1) / std::sqrt(static_cast<S>(wq.rows()));
  Vec<S> q = wq * link_state;
  std::vector<Vec<S>> keys;
  std::vector<S> score(neighbors.size());
  keys.reserve(neighbors.size());
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    keys.push_back(wk * *neighbors[i]);
    score[i] = q.dot(keys.back()) * scale;
  }
  std::vector<int> order(neighbors.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
    if (score[ia] != score[ib]) return score[ia] < score[ib];
    const auto& ha = *neighbors[ia];
    const auto& hb = *neighbors[ib];
    return std::lexicographical_compare(ha.data(), ha.data() + ha.size(), hb.data(), hb.data() + hb.size());
  });
  const S top = *std::max_element(score.begin(), score.end());
  std::vector<S> alpha(neighbors.size());
  S total = 0;
  for (int i : order) {
    alpha[static_cast<std::size_t>(i)] = std::exp(score[static_cast<std::size_t>(i)] - top);
    total += alpha[static_cast<std::size_t>(i)];
  }
  for (S& a : alpha) a /= total;
  if (cache) *cache = {std::move(order), std::move(q), std::move(keys), alpha};
  return alpha;
}

template <class S>
Vec<S> aggregate(const std::vector<const Vec<S>*>& neighbors, const std::vector<S>& alpha,
                 const std::vector<int>& order) {
  Vec<S> agg = Vec<S>::Zero(neighbors.front()->size());
  for (int i : order) agg += alpha[static_cast<std::size_t>(i)] * *neighbors[static_cast<std::size_t>(i)];
  return agg;
}

void check_graph(const HeteroGraph& graph) {
  for (std::size_t t = 0; t < graph.flows.size(); ++t) {
    if (graph.flows[t].links.empty()) throw ModelError("flow " + std::to_string(t) + " has an empty path");
    for (int l : graph.flows[t].links) {
      if (l < 0 || static_cast<std::size_t>(l) >= graph.links.size()) {
        throw ModelError("flow " + std::to_string(t) + " references missing link node " + std::to_string(l));
      }
    }
  }
  for (std::size_t l = 0; l < graph.links.size(); ++l) {
    for (int t : graph.links[l].flows) {
      if (t < 0 || static_cast<std::size_t>(t) >= graph.flows.size()) {
        throw ModelError("link node " + std::to_string(l) + " references missing flow " + std::to_string(t));
      }
    }
  }
}

void check_weights(const ModelWeights& w) {
  if (w.layout != make_layout(w.config)) throw ModelError("weights layout does not match configuration");
  if (w.params.size() != w.layout.back().offset + w.layout.back().size()) {
    throw ModelError("parameter vector size does not match layout");
  }
}

ParamView<double> view(const ModelWeights& w) { return {w.params.data(), &w.layout}; }

template <class S, std::size_t N>
Vec<S> to_vec(const std::array<double, N>& x) {
  Vec<S> v(static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) v(static_cast<Eigen::Index>(i)) = static_cast<S>(x[i]);
  return v;
}

template <class S>
struct IterationCache {
  std::vector<std::vector<GruCache<S>>> flow_steps;  // [t][pos]
  std::vector<AttnCache<S>> attn;                    // [l]
  std::vector<GruCache<S>> link_gru;                 // [l]
};

/// One message-passing round. Returns the round's (flow, link) states.
template <class S>
void iterate(const ParamView<S>& p, const HeteroGraph& graph, const std::vector<Vec<S>>& hf,
             const std::vector<Vec<S>>& he, std::vector<Vec<S>>& hf_next, std::vector<Vec<S>>& he_next,
             IterationCache<S>* cache) {
  hf_next.resize(hf.size());
  he_next.resize(he.size());
  if (cache) {
    cache->flow_steps.assign(graph.flows.size(), {});
    cache->attn.assign(graph.links.size(), {});
    cache->link_gru.assign(graph.links.size(), {});
  }
  for (std::size_t t = 0; t < graph.flows.size(); ++t) {
    const auto& path = graph.flows[t].links;
    Vec<S> h = hf[t];
    if (cache) cache->flow_steps[t].resize(path.size());
    for (std::size_t pos = 0; pos < path.size(); ++pos) {
      h = gru_forward<S>(p, kFlowGru, he[static_cast<std::size_t>(path[pos])], h,
                         cache ? &cache->flow_steps[t][pos] : nullptr);
    }
    hf_next[t] = std::move(h);
  }
  std::vector<const Vec<S>*> neighbors;
  for (std::size_t l = 0; l < graph.links.size(); ++l) {
    const auto& fl = graph.links[l].flows;
    if (fl.empty()) {
      he_next[l] = he[l];
      continue;
    }
    neighbors.clear();
    for (int t : fl) neighbors.push_back(&hf_next[static_cast<std::size_t>(t)]);
    AttnCache<S> local;
    AttnCache<S>& ac = cache ? cache->attn[l] : local;
    const auto alpha = attention_weights<S>(p, he[l], neighbors, &ac);
    const Vec<S> agg = aggregate<S>(neighbors, alpha, ac.order);
    he_next[l] = gru_forward<S>(p, kLinkGru, agg, he[l], cache ? &cache->link_gru[l] : nullptr);
  }
}

template <class S>
struct ReadoutCache {
  Vec<S> pre1, pre2;
  S out = 0;
};

template <class S>
S readout(const ParamView<S>& p, const Vec<S>& link_state, S unit, ReadoutCache<S>* cache) {
  Vec<S> pre1 = p.mat(kReadoutW1) * link_state + p.vec(kReadoutB1);
  Vec<S> pre2 = p.mat(kReadoutW2) * relu<S>(pre1) + p.vec(kReadoutB2);
  const S out = (p.mat(kReadoutW3) * relu<S>(pre2))(0) + p.vec(kReadoutB3)(0);
  if (cache) *cache = {std::move(pre1), std::move(pre2), out};
  return unit * softplus<S>(out);
}

/// Whole forward pass at scalar precision S, keeping intermediates when asked.
template <class S>
struct Forward {
  std::vector<Vec<S>> xf, xe;
  std::vector<Vec<S>> flow_pre, link_pre;
  std::vector<std::vector<Vec<S>>> hf, he;  // [k] for k = 0..K
  std::vector<IterationCache<S>> rounds;    // [k] for k = 0..K-1
  std::vector<ReadoutCache<S>> readouts;
  std::vector<S> occupancy;
  std::vector<S> predictions;

  Forward(const HeteroGraph& graph, const ModelWeights& w, const ParamView<S>& p, bool keep) {
    const auto iterations = static_cast<std::size_t>(w.config.iterations);
    hf.resize(keep ? iterations + 1 : 2);
    he.resize(keep ? iterations + 1 : 2);
    for (const auto& f : graph.flows) {
      xf.push_back(to_vec<S>(zscore_apply(w.stats, f.x)));
      flow_pre.push_back(p.mat(kFlowEmbedW1) * xf.back() + p.vec(kFlowEmbedB1));
      hf[0].push_back(p.mat(kFlowEmbedW2) * relu<S>(flow_pre.back()) + p.vec(kFlowEmbedB2));
    }
    for (const auto& l : graph.links) {
      xe.push_back(to_vec<S>(zscore_apply(w.stats, l.x)));
      link_pre.push_back(p.mat(kLinkEmbedW1) * xe.back() + p.vec(kLinkEmbedB1));
      he[0].push_back(p.mat(kLinkEmbedW2) * relu<S>(link_pre.back()) + p.vec(kLinkEmbedB2));
    }
    if (keep) rounds.resize(iterations);
    for (std::size_t k = 0; k < iterations; ++k) {
      if (keep) {
        iterate<S>(p, graph, hf[k], he[k], hf[k + 1], he[k + 1], &rounds[k]);
      } else {
        iterate<S>(p, graph, hf[0], he[0], hf[1], he[1], nullptr);
        std::swap(hf[0], hf[1]);
        std::swap(he[0], he[1]);
      }
    }
    const auto& final_links = keep ? he.back() : he[0];
    readouts.resize(graph.links.size());
    occupancy.resize(graph.links.size());
    const S unit = static_cast<S>(w.occupancy_unit);
    for (std::size_t l = 0; l < graph.links.size(); ++l) {
      occupancy[l] = readout<S>(p, final_links[l], unit, keep ? &readouts[l] : nullptr);
    }
    predictions.resize(graph.flows.size());
    for (std::size_t t = 0; t < graph.flows.size(); ++t) {
      S y = 0;
      for (int l : graph.flows[t].links) {
        const auto li = static_cast<std::size_t>(l);
        y += occupancy[li] / static_cast<S>(graph.links[li].x[link_feature::kCapacity]);
      }
      predictions[t] = y;
    }
  }
};

}  // namespace

std::string tensor_name(TensorId id) {
  static const char* const names[kTensorCount] = {
      "flow_embed.w1", "flow_embed.b1", "flow_embed.w2", "flow_embed.b2",
      "link_embed.w1", "link_embed.b1", "link_embed.w2", "link_embed.b2",
      "flow_gru.wz",   "flow_gru.uz",   "flow_gru.bz",   "flow_gru.wr",   "flow_gru.ur",
      "flow_gru.br",   "flow_gru.wh",   "flow_gru.uh",   "flow_gru.bh",
      "link_gru.wz",   "link_gru.uz",   "link_gru.bz",   "link_gru.wr",   "link_gru.ur",
      "link_gru.br",   "link_gru.wh",   "link_gru.uh",   "link_gru.bh",
      "attn.query",    "attn.key",
      "readout.w1",    "readout.b1",    "readout.w2",    "readout.b2",    "readout.w3",    "readout.b3",
  };
  return names[id];
}

std::vector<TensorShape> make_layout(const ModelConfig& cfg) {
  const int m = cfg.flow_dim, n = cfg.link_dim, h = cfg.embed_hidden, a = cfg.attention_dim;
  const int r1 = cfg.readout_hidden1, r2 = cfg.readout_hidden2;
  if (m <= 0 || n <= 0 || h <= 0 || a <= 0 || r1 <= 0 || r2 <= 0) throw ModelError("model dimensions must be > 0");
  if (cfg.iterations < 0) throw ModelError("iteration count must be >= 0");
  const int fx = static_cast<int>(kFlowFeatureDim), lx = static_cast<int>(kLinkFeatureDim);
  std::vector<TensorShape> s = {
      {h, fx}, {h, 1}, {m, h}, {m, 1},                                            // flow embedding
      {h, lx}, {h, 1}, {n, h}, {n, 1},                                            // link embedding
      {m, n}, {m, m}, {m, 1}, {m, n}, {m, m}, {m, 1}, {m, n}, {m, m}, {m, 1},     // flow GRU
      {n, m}, {n, n}, {n, 1}, {n, m}, {n, n}, {n, 1}, {n, m}, {n, n}, {n, 1},     // link GRU
      {a, n}, {a, m},                                                             // attention
      {r1, n}, {r1, 1}, {r2, r1}, {r2, 1}, {1, r2}, {1, 1},                       // readout
  };
  std::size_t offset = 0;
  for (auto& t : s) {
    t.offset = offset;
    offset += t.size();
  }
  return s;
}

std::span<double> ModelWeights::tensor(TensorId id) {
  const auto& s = layout.at(static_cast<std::size_t>(id));
  return {params.data() + s.offset, s.size()};
}

std::span<const double> ModelWeights::tensor(TensorId id) const {
  const auto& s = layout.at(static_cast<std::size_t>(id));
  return {params.data() + s.offset, s.size()};
}

ModelWeights init_weights(Rng& rng, const ModelConfig& cfg) {
  ModelWeights w;
  w.config = cfg;
  w.layout = make_layout(cfg);
  w.params.assign(w.layout.back().offset + w.layout.back().size(), 0.0);
  for (int id = 0; id < kTensorCount; ++id) {
    const auto& s = w.layout[static_cast<std::size_t>(id)];
    if (s.is_bias()) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : w.tensor(static_cast<TensorId>(id))) v = dist(rng);
  }
  return w;
}

EmbeddingState embed(std::span<const FlowFeatures> flows, std::span<const LinkFeatures> links, const ModelWeights& w) {
  check_weights(w);
  const auto p = view(w);
  EmbeddingState s;
  for (const auto& x : flows) {
    const VectorXd a1 = relu<double>(p.mat(kFlowEmbedW1) * to_vec<double>(x) + p.vec(kFlowEmbedB1));
    s.flows.push_back(p.mat(kFlowEmbedW2) * a1 + p.vec(kFlowEmbedB2));
  }
  for (const auto& x : links) {
    const VectorXd a1 = relu<double>(p.mat(kLinkEmbedW1) * to_vec<double>(x) + p.vec(kLinkEmbedB1));
    s.links.push_back(p.mat(kLinkEmbedW2) * a1 + p.vec(kLinkEmbedB2));
  }
  return s;
}

EmbeddingState message_pass(EmbeddingState state, const HeteroGraph& graph, const ModelWeights& w) {
  check_weights(w);
  check_graph(graph);
  if (state.flows.size() != graph.flows.size() || state.links.size() != graph.links.size()) {
    throw ModelError("embedding state does not match graph size");
  }
  const auto p = view(w);
  std::vector<VectorXd> hf_next, he_next;
  for (int k = 0; k < w.config.iterations; ++k) {
    iterate<double>(p, graph, state.flows, state.links, hf_next, he_next, nullptr);
    std::swap(state.flows, hf_next);
    std::swap(state.links, he_next);
    ++state.k;
  }
  return state;
}

std::vector<double> attention_score(const VectorXd& link_state, std::span<const VectorXd> flow_states,
                                    const ModelWeights& w) {
  if (flow_states.empty()) throw ModelError("attention needs at least one neighbor");
  check_weights(w);
  std::vector<const VectorXd*> neighbors;
  for (const auto& h : flow_states) neighbors.push_back(&h);
  return attention_weights<double>(view(w), link_state, neighbors, nullptr);
}

std::vector<double> link_occupancy(const EmbeddingState& state, const ModelWeights& w) {
  check_weights(w);
  const auto p = view(w);
  std::vector<double> occ;
  occ.reserve(state.links.size());
  for (const auto& h : state.links) occ.push_back(readout<double>(p, h, w.occupancy_unit, nullptr));
  return occ;
}

struct ForwardPass::Cache : Forward<double> {
  using Forward<double>::Forward;
};

ForwardPass::ForwardPass(const HeteroGraph& graph, const ModelWeights& w) : graph_(&graph), weights_(&w) {
  check_weights(w);
  check_graph(graph);
  cache_ = std::make_unique<Cache>(graph, w, view(w), true);
}

ForwardPass::~ForwardPass() = default;
ForwardPass::ForwardPass(ForwardPass&&) noexcept = default;
ForwardPass& ForwardPass::operator=(ForwardPass&&) noexcept = default;

const std::vector<double>& ForwardPass::predictions() const { return cache_->predictions; }

void ForwardPass::backward(std::span<const double> d_pred, std::span<double> grad) const {
  const auto& graph = *graph_;
  const auto& w = *weights_;
  const auto& c = *cache_;
  if (d_pred.size() != graph.flows.size()) throw ModelError("gradient size does not match flow count");
  if (grad.size() != w.params.size()) throw ModelError("gradient buffer does not match parameter count");
  const auto p = view(w);
  const GradView g{grad.data(), &w.layout};
  const auto iterations = static_cast<std::size_t>(w.config.iterations);
  const auto m = w.config.flow_dim;
  const auto n = w.config.link_dim;

  // Delay sum -> occupancy -> readout MLP.
  std::vector<double> d_occ(graph.links.size(), 0.0);
  for (std::size_t t = 0; t < graph.flows.size(); ++t) {
    for (int l : graph.flows[t].links) {
      const auto li = static_cast<std::size_t>(l);
      d_occ[li] += d_pred[t] / graph.links[li].x[link_feature::kCapacity];
    }
  }
  std::vector<VectorXd> dhe(graph.links.size(), VectorXd::Zero(n));
  const auto& final_links = c.he.back();
  for (std::size_t l = 0; l < graph.links.size(); ++l) {
    if (d_occ[l] == 0.0) continue;
    const auto& rc = c.readouts[l];
    const double d_out = d_occ[l] * w.occupancy_unit * logistic(rc.out);
    const VectorXd a2 = relu<double>(rc.pre2);
    const VectorXd a1 = relu<double>(rc.pre1);
    g.mat(kReadoutW3).noalias() += d_out * a2.transpose();
    g.vec(kReadoutB3)(0) += d_out;
    const VectorXd d_pre2 = relu_mask(rc.pre2, d_out * p.mat(kReadoutW3).transpose());
    g.mat(kReadoutW2).noalias() += d_pre2 * a1.transpose();
    g.vec(kReadoutB2) += d_pre2;
    const VectorXd d_pre1 = relu_mask(rc.pre1, p.mat(kReadoutW2).transpose() * d_pre2);
    g.mat(kReadoutW1).noalias() += d_pre1 * final_links[l].transpose();
    g.vec(kReadoutB1) += d_pre1;
    dhe[l] = p.mat(kReadoutW1).transpose() * d_pre1;
  }

  std::vector<VectorXd> dhf(graph.flows.size(), VectorXd::Zero(m));
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(w.config.attention_dim));
  VectorXd dx, dh;
  for (std::size_t k = iterations; k-- > 0;) {
    const auto& round = c.rounds[k];
    const auto& hf_next = c.hf[k + 1];
    const auto& he_prev = c.he[k];
    std::vector<VectorXd> dhe_prev(graph.links.size(), VectorXd::Zero(n));

    // Link update: dhe holds d/d(he^{k+1}); dhf holds d/d(hf^{k+1}).
    for (std::size_t l = 0; l < graph.links.size(); ++l) {
      const auto& fl = graph.links[l].flows;
      if (fl.empty()) {
        dhe_prev[l] += dhe[l];
        continue;
      }
      gru_backward(p, g, kLinkGru, round.link_gru[l], dhe[l], dx, dh);
      dhe_prev[l] += dh;
      const auto& ac = round.attn[l];
      const VectorXd& d_agg = dx;
      std::vector<double> d_alpha(fl.size());
      double weighted = 0.0;
      for (std::size_t i = 0; i < fl.size(); ++i) {
        const auto t = static_cast<std::size_t>(fl[i]);
        d_alpha[i] = d_agg.dot(hf_next[t]);
        dhf[t] += ac.alpha[i] * d_agg;
        weighted += ac.alpha[i] * d_alpha[i];
      }
      VectorXd d_query = VectorXd::Zero(ac.query.size());
      for (std::size_t i = 0; i < fl.size(); ++i) {
        const auto t = static_cast<std::size_t>(fl[i]);
        const double d_score = ac.alpha[i] * (d_alpha[i] - weighted) * attn_scale;
        d_query += d_score * ac.keys[i];
        const VectorXd d_key = d_score * ac.query;
        g.mat(kAttnKey).noalias() += d_key * hf_next[t].transpose();
        dhf[t].noalias() += p.mat(kAttnKey).transpose() * d_key;
      }
      g.mat(kAttnQuery).noalias() += d_query * he_prev[l].transpose();
      dhe_prev[l].noalias() += p.mat(kAttnQuery).transpose() * d_query;
    }

    // Flow update: GRU scan along each path, in reverse.
    std::vector<VectorXd> dhf_prev(graph.flows.size());
    for (std::size_t t = 0; t < graph.flows.size(); ++t) {
      const auto& path = graph.flows[t].links;
      VectorXd d_state = dhf[t];
      for (std::size_t pos = path.size(); pos-- > 0;) {
        gru_backward(p, g, kFlowGru, round.flow_steps[t][pos], d_state, dx, dh);
        dhe_prev[static_cast<std::size_t>(path[pos])] += dx;
        d_state = dh;
      }
      dhf_prev[t] = std::move(d_state);
    }
    dhe = std::move(dhe_prev);
    dhf = std::move(dhf_prev);
  }

  // Embedding MLPs.
  for (std::size_t t = 0; t < graph.flows.size(); ++t) {
    const VectorXd a1 = relu<double>(c.flow_pre[t]);
    g.mat(kFlowEmbedW2).noalias() += dhf[t] * a1.transpose();
    g.vec(kFlowEmbedB2) += dhf[t];
    const VectorXd d_pre = relu_mask(c.flow_pre[t], p.mat(kFlowEmbedW2).transpose() * dhf[t]);
    g.mat(kFlowEmbedW1).noalias() += d_pre * c.xf[t].transpose();
    g.vec(kFlowEmbedB1) += d_pre;
  }
  for (std::size_t l = 0; l < graph.links.size(); ++l) {
    const VectorXd a1 = relu<double>(c.link_pre[l]);
    g.mat(kLinkEmbedW2).noalias() += dhe[l] * a1.transpose();
    g.vec(kLinkEmbedB2) += dhe[l];
    const VectorXd d_pre = relu_mask(c.link_pre[l], p.mat(kLinkEmbedW2).transpose() * dhe[l]);
    g.mat(kLinkEmbedW1).noalias() += d_pre * c.xe[l].transpose();
    g.vec(kLinkEmbedB1) += d_pre;
  }
}

std::vector<double> predict_delay(const HeteroGraph& graph, const ModelWeights& w) {
  check_weights(w);
  check_graph(graph);
  return Forward<double>(graph, w, view(w), false).predictions;
}

std::vector<long double> predict_delay_extended(const HeteroGraph& graph, const ModelWeights& w) {
  check_weights(w);
  check_graph(graph);
  const std::vector<long double> wide(w.params.begin(), w.params.end());
  return Forward<long double>(graph, w, {wide.data(), &w.layout}, false).predictions;
}

// Binary layout, little endian:
//   "NDTW" | u32 format | u32 m | u32 n | u32 K | u32 tensor count |
//   (u32 rows, u32 cols) per tensor | f64 params |
//   f64 flow mean[5], flow std[5], link mean[2], link std[2] |
//   f64 occupancy unit | u64 model version
namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr char kMagic[4] = {'N', 'D', 'T', 'W'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint64_t uint(int width) {
    if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) throw ModelError("weights blob truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_weights(const ModelWeights& w) {
  check_weights(w);
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(w.config.flow_dim));
  put_u32(out, static_cast<std::uint32_t>(w.config.link_dim));
  put_u32(out, static_cast<std::uint32_t>(w.config.iterations));
  put_u32(out, static_cast<std::uint32_t>(w.layout.size()));
  for (const auto& s : w.layout) {
    put_u32(out, static_cast<std::uint32_t>(s.rows));
    put_u32(out, static_cast<std::uint32_t>(s.cols));
  }
  for (double v : w.params) put_f64(out, v);
  for (double v : w.stats.flow_mean) put_f64(out, v);
  for (double v : w.stats.flow_std) put_f64(out, v);
  for (double v : w.stats.link_mean) put_f64(out, v);
  for (double v : w.stats.link_std) put_f64(out, v);
  put_f64(out, w.occupancy_unit);
  put_u64(out, w.version);
  return out;
}

ModelWeights deserialize_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) throw ModelError("not an NDTW weights blob");
  Reader in(bytes.subspan(4));
  if (const auto fmt = in.u32(); fmt != kFormatVersion) {
    throw ModelError("unsupported weights format version " + std::to_string(fmt));
  }
  ModelWeights w;
  w.config.flow_dim = static_cast<int>(in.u32());
  w.config.link_dim = static_cast<int>(in.u32());
  w.config.iterations = static_cast<int>(in.u32());
  const auto count = in.u32();
  if (count != kTensorCount) throw ModelError("unexpected tensor count " + std::to_string(count));
  std::vector<std::pair<int, int>> shapes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const int rows = static_cast<int>(in.u32());
    const int cols = static_cast<int>(in.u32());
    shapes.emplace_back(rows, cols);
  }
  w.config.embed_hidden = shapes[kFlowEmbedW1].first;
  w.config.attention_dim = shapes[kAttnQuery].first;
  w.config.readout_hidden1 = shapes[kReadoutW1].first;
  w.config.readout_hidden2 = shapes[kReadoutW2].first;
  w.layout = make_layout(w.config);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].first != w.layout[i].rows || shapes[i].second != w.layout[i].cols) {
      throw ModelError("tensor " + tensor_name(static_cast<TensorId>(i)) + " has an inconsistent shape");
    }
  }
  w.params.resize(w.layout.back().offset + w.layout.back().size());
  for (double& v : w.params) v = in.f64();
  for (double& v : w.stats.flow_mean) v = in.f64();
  for (double& v : w.stats.flow_std) v = in.f64();
  for (double& v : w.stats.link_mean) v = in.f64();
  for (double& v : w.stats.link_std) v = in.f64();
  w.occupancy_unit = in.f64();
  w.version = in.u64();
  if (!in.done()) throw ModelError("trailing bytes after weights blob");
  return w;
}

}  // namespace ndt
