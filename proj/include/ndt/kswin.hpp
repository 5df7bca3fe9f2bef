#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>

#include "ndt/traffic.hpp"

namespace ndt {

struct KswinConfig {
  double alpha = 0.001;
  std::size_t window_size = 300;
  std::size_t stat_size = 30;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument unless 0 < alpha < 1, r >= 5 and 2r <= w.
  void validate() const;
};

struct DriftEvent {
  /// Zero-based index of the sample whose arrival triggered the test.
  std::int64_t sample_index = 0;
  double p_value = 1.0;
  /// Two-sample KS statistic D.
  double statistic = 0.0;

  bool operator==(const DriftEvent&) const = default;
};

/// sup |F_a - F_b| over the pooled sample points.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Asymptotic two-sided p-value of the two-sample KS statistic.
double ks_pvalue(double d, std::size_t n, std::size_t m);

/// Sliding-window KS drift detector. Once the window holds w samples, every
/// update compares the r most recent samples against r samples drawn without
/// replacement from the older part of the window.
class KswinDetector {
 public:
  explicit KswinDetector(const KswinConfig& cfg = {});

  std::optional<DriftEvent> update(double x);

  const KswinConfig& config() const { return cfg_; }
  std::int64_t samples_seen() const { return seen_; }
  std::size_t window_fill() const { return window_.size(); }

 private:
  KswinConfig cfg_;
  Rng rng_;
  std::deque<double> window_;
  std::int64_t seen_ = 0;
};

}  // namespace ndt
