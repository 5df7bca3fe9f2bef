#include "ndt/kswin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace ndt {

void KswinConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0, 1)");
  if (stat_size < 5) throw std::invalid_argument("stat size must be >= 5");
  // The reference is drawn without replacement from the older w - r samples.
  if (2 * stat_size > window_size) throw std::invalid_argument("window must hold at least twice the stat size");
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double n = static_cast<double>(sa.size()), m = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() || j < sb.size()) {
    double x;
    if (j == sb.size() || (i < sa.size() && sa[i] <= sb[j])) {
      x = sa[i];
    } else {
      x = sb[j];
    }
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

double ks_pvalue(double d, std::size_t n, std::size_t m) {
  if (n == 0 || m == 0) throw std::invalid_argument("ks_pvalue: empty sample");
  if (d <= 0.0) return 1.0;
  const double en = std::sqrt(static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  double sum = 0.0;
  for (int k = 1; k < 1000; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-12) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KswinDetector::KswinDetector(const KswinConfig& cfg) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

std::optional<DriftEvent> KswinDetector::update(double x) {
  const std::int64_t index = seen_++;
  window_.push_back(x);
  if (window_.size() > cfg_.window_size) window_.pop_front();
  if (window_.size() < cfg_.window_size) return std::nullopt;

  const std::size_t r = cfg_.stat_size;
  const std::size_t older = cfg_.window_size - r;
  std::vector<std::size_t> pick(older);
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  std::vector<double> reference(r), recent(window_.end() - static_cast<std::ptrdiff_t>(r), window_.end());
  for (std::size_t k = 0; k < r; ++k) {
    std::uniform_int_distribution<std::size_t> dist(k, older - 1);
    std::swap(pick[k], pick[dist(rng_)]);
    reference[k] = window_[pick[k]];
  }
  const double d = ks_statistic(reference, recent);
  const double p = ks_pvalue(d, r, r);
  if (p > cfg_.alpha) return std::nullopt;
  window_.erase(window_.begin(), window_.end() - static_cast<std::ptrdiff_t>(r));
  return DriftEvent{index, p, d};
}

}  // namespace ndt
