#include "ndt/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace ndt {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation fraction must be in [0, 1)");
  }
}

namespace {

double label_magnitude(double y, std::size_t* clamped) {
  const double a = std::abs(y);
  if (a < kMapeLabelFloor) {
    if (clamped) ++*clamped;
    return kMapeLabelFloor;
  }
  return a;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Sum of absolute percentage errors; adds d(scale * sum)/d(y_hat) to d_pred.
double ape_sum(std::span<const double> y, std::span<const double> y_hat, double scale, std::vector<double>* d_pred) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double denom = label_magnitude(y[i], nullptr);
    total += std::abs(y[i] - y_hat[i]) / denom;
    if (d_pred) (*d_pred)[i] = scale * sign(y_hat[i] - y[i]) / denom;
  }
  return total;
}

struct Group {
  HeteroGraph graph;
  std::vector<double> y;
};

std::vector<Group> group_by_snapshot(const std::vector<const LabeledExample*>& examples) {
  std::map<std::int64_t, std::vector<const LabeledExample*>> by_snapshot;
  for (const auto* ex : examples) by_snapshot[ex->snapshot].push_back(ex);
  std::vector<Group> groups;
  for (const auto& [id, members] : by_snapshot) {
    Group g;
    g.graph = build_hypergraph(std::span<const LabeledExample* const>(members));
    for (const auto* ex : members) g.y.push_back(ex->y);
    groups.push_back(std::move(g));
  }
  return groups;
}

ZScoreStats fit_stats(const std::vector<const LabeledExample*>& examples) {
  std::vector<FlowFeatures> flows;
  std::vector<LinkFeatures> links;
  for (const auto* ex : examples) {
    flows.push_back(ex->x_f);
    links.insert(links.end(), ex->link_context.begin(), ex->link_context.end());
  }
  return zscore_fit(flows, links);
}

long double extended_mape(std::span<const double> y, const std::vector<long double>& y_hat) {
  long double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    total += std::abs(static_cast<long double>(y[i]) - y_hat[i]) / label_magnitude(y[i], nullptr);
  }
  return 100.0L * total / static_cast<long double>(y.size());
}

double evaluate_mape(const std::vector<Group>& groups, const ModelWeights& w) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    const auto pred = predict_delay(g.graph, w);
    total += ape_sum(g.y, pred, 0.0, nullptr);
    n += g.y.size();
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : 100.0 * total / static_cast<double>(n);
}

}  // namespace

double mape(std::span<const double> y, std::span<const double> y_hat, std::size_t* clamped) {
  if (y.empty()) throw std::invalid_argument("mape needs at least one example");
  if (y.size() != y_hat.size()) throw std::invalid_argument("mape: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += std::abs(y[i] - y_hat[i]) / label_magnitude(y[i], clamped);
  return 100.0 * total / static_cast<double>(y.size());
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double fit_occupancy_unit(std::span<const LabeledExample* const> examples) {
  std::vector<double> ratios;
  for (const auto* ex : examples) {
    double inv_cap = 0.0;
    for (const auto& lf : ex->link_context) inv_cap += 1.0 / lf[link_feature::kCapacity];
    if (inv_cap > 0.0 && std::isfinite(ex->y) && ex->y > 0.0) ratios.push_back(ex->y / inv_cap);
  }
  if (ratios.empty()) return 1.0;
  const auto mid = ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2);
  std::nth_element(ratios.begin(), mid, ratios.end());
  return *mid;
}

double mape_loss_and_grad(const HeteroGraph& graph, std::span<const double> y, const ModelWeights& w,
                          std::span<double> grad) {
  if (y.size() != graph.flows.size()) throw std::invalid_argument("label count does not match flow count");
  std::fill(grad.begin(), grad.end(), 0.0);
  const ForwardPass fp(graph, w);
  const double scale = 100.0 / static_cast<double>(y.size());
  std::vector<double> d_pred(y.size());
  const double loss = scale * ape_sum(y, fp.predictions(), scale, &d_pred);
  fp.backward(d_pred, grad);
  return loss;
}

TrainResult train(const ModelWeights& w0, std::span<const LabeledExample> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("training needs at least one example");

  TrainResult result;
  result.weights = w0;
  result.weights.version = w0.version + 1;
  if (cfg.epochs == 0) return result;

  // Split.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(cfg.seed, 0x511));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(data.size())));
  if (data.size() - n_val < 2) n_val = data.size() >= 2 ? data.size() - 2 : 0;
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::vector<const LabeledExample*> train_set, val_set;
  for (auto i : train_idx) train_set.push_back(&data[i]);
  for (auto i : val_idx) val_set.push_back(&data[i]);
  result.train_examples = train_set.size();
  result.validation_examples = val_set.size();
  for (const auto* ex : train_set) label_magnitude(ex->y, &result.clamped_labels);

  ModelWeights& w = result.weights;
  if (train_set.size() >= 2) w.stats = fit_stats(train_set);
  w.occupancy_unit = fit_occupancy_unit(train_set);

  const auto groups = group_by_snapshot(train_set);
  const auto val_groups = group_by_snapshot(val_set);

  Adam adam(w.params.size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5f2));
  std::vector<std::size_t> group_order(groups.size());
  std::iota(group_order.begin(), group_order.end(), std::size_t{0});
  std::vector<double> grad(w.params.size()), step_grad(w.params.size());
  std::vector<double> last_good = w.params;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(group_order.begin(), group_order.end(), shuffle_rng);
    double epoch_ape = 0.0;
    std::size_t pos = 0;
    while (pos < group_order.size()) {
      std::size_t end = pos, batch_n = 0;
      while (end < group_order.size() && batch_n < static_cast<std::size_t>(cfg.batch_size)) {
        batch_n += groups[group_order[end++]].y.size();
      }
      const double scale = 100.0 / static_cast<double>(batch_n);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_ape = 0.0;
      for (std::size_t b = pos; b < end; ++b) {
        const auto& g = groups[group_order[b]];
        const ForwardPass fp(g.graph, w);
        std::vector<double> d_pred(g.y.size());
        batch_ape += ape_sum(g.y, fp.predictions(), scale, &d_pred);
        std::fill(step_grad.begin(), step_grad.end(), 0.0);
        fp.backward(d_pred, step_grad);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += step_grad[i];
      }
      if (!std::isfinite(batch_ape) || !all_finite(grad)) {
        w.params = last_good;
        result.status = TrainStatus::Diverged;
        result.diagnostic = "non-finite loss in epoch " + std::to_string(epoch) + "; kept last finite weights";
        result.validation_mape = evaluate_mape(val_groups, w);
        return result;
      }
      last_good = w.params;
      adam.step(w.params, grad);
      epoch_ape += batch_ape;
      pos = end;
    }
    result.history.push_back({epoch, 100.0 * epoch_ape / static_cast<double>(train_set.size())});
  }
  if (!all_finite(w.params)) {
    w.params = last_good;
    result.status = TrainStatus::Diverged;
    result.diagnostic = "non-finite parameters after final step; kept last finite weights";
  }
  result.validation_mape = evaluate_mape(val_groups, w);
  return result;
}

double gradient_check(const ModelWeights& w, std::span<const LabeledExample> batch, double h, std::uint64_t seed,
                      std::size_t n_params) {
  if (batch.empty()) throw std::invalid_argument("gradient check needs a non-empty batch");
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
  const HeteroGraph graph = build_hypergraph(batch);
  std::vector<double> y;
  for (const auto& ex : batch) y.push_back(ex.y);

  std::vector<double> grad(w.params.size());
  mape_loss_and_grad(graph, y, w, grad);

  std::vector<std::size_t> idx(w.params.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(n_params, idx.size()));

  ModelWeights probe = w;
  double worst = 0.0;
  for (std::size_t i : idx) {
    const double orig = probe.params[i];
    probe.params[i] = orig + h;
    const long double up = extended_mape(y, predict_delay_extended(graph, probe));
    probe.params[i] = orig - h;
    const long double down = extended_mape(y, predict_delay_extended(graph, probe));
    probe.params[i] = orig;
    // The step actually taken, after rounding to double.
    const long double step = static_cast<long double>(orig + h) - static_cast<long double>(orig - h);
    const double fd = static_cast<double>((up - down) / step);
    const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace ndt
