#include "ndt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ndt {

namespace {

double ratio_db(double err, double energy) {
  if (!(energy > 0.0)) throw std::invalid_argument("nmse: labels have zero energy");
  if (err == 0.0) return kPerfectNmse;
  return 10.0 * std::log10(err / energy);
}

}  // namespace

double nmse_db(std::span<const double> y, std::span<const double> y_hat) {
  if (y.empty()) throw std::invalid_argument("nmse: empty input");
  if (y.size() != y_hat.size()) throw std::invalid_argument("nmse: length mismatch");
  double err = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    err += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    energy += y[i] * y[i];
  }
  return ratio_db(err, energy);
}

double nmse_improvement(double with_db, double without_db) { return 1.0 - std::pow(10.0, (with_db - without_db) / 10.0); }

WindowedNmse::WindowedNmse(std::size_t window) : window_(window) {
  if (window == 0) throw std::invalid_argument("window must be >= 1");
}

NmseWindow WindowedNmse::close(bool partial) {
  NmseWindow w;
  w.index = windows_.size();
  w.first_sample = seen_ - count_;
  w.size = count_;
  w.nmse_db = ratio_db(err_, energy_);
  w.partial = partial;
  windows_.push_back(w);
  count_ = 0;
  err_ = energy_ = 0.0;
  return w;
}

std::optional<NmseWindow> WindowedNmse::push(double y, double y_hat) {
  err_ += (y - y_hat) * (y - y_hat);
  energy_ += y * y;
  ++count_;
  ++seen_;
  if (count_ == window_) return close(false);
  return std::nullopt;
}

void WindowedNmse::push(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw std::invalid_argument("nmse: length mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) push(y[i], y_hat[i]);
}

std::optional<NmseWindow> WindowedNmse::finish() {
  if (count_ == 0) return std::nullopt;
  return close(true);
}

std::vector<NmseWindow> windowed_nmse(std::span<const double> y, std::span<const double> y_hat, std::size_t window) {
  WindowedNmse acc(window);
  acc.push(y, y_hat);
  acc.finish();
  return acc.windows();
}

double assign_pdb(const TopologyGraph& g, const Path& path, const PdbPolicy& policy) {
  if (!(policy.floor_s > 0.0)) throw std::invalid_argument("pdb floor must be > 0");
  return std::max(policy.floor_s, policy.beta * path_prop_delay(g, path));
}

ViolationReport classify_and_report(std::span<const double> y_hat, std::span<const double> y,
                                    std::span<const double> pdb, std::size_t window) {
  if (y_hat.size() != y.size() || y.size() != pdb.size()) throw std::invalid_argument("classify: length mismatch");
  if (window == 0) throw std::invalid_argument("window must be >= 1");
  ViolationReport r;
  r.flows = y.size();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i % window == 0) r.windows.push_back({r.windows.size(), 0, 0, 0, 0, false});
    auto& w = r.windows.back();
    const bool predicted = y_hat[i] > pdb[i];
    const bool actual = y[i] > pdb[i];
    ++w.size;
    w.predicted += predicted;
    w.actual += actual;
    w.misclassified += predicted != actual;
  }
  for (auto& w : r.windows) {
    w.partial = w.size < window;
    r.predicted_violations += w.predicted;
    r.actual_violations += w.actual;
    r.misclassified += w.misclassified;
  }
  return r;
}

}  // namespace ndt
