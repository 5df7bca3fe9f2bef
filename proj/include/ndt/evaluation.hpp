#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ndt/topology.hpp"

namespace ndt {

/// Returned by nmse_db when the prediction is exact.
inline constexpr double kPerfectNmse = -std::numeric_limits<double>::infinity();

/// 10 log10(sum (y - y_hat)^2 / sum y^2).
double nmse_db(std::span<const double> y, std::span<const double> y_hat);

/// Linear-MSE reduction implied by two NMSE values on the same labels,
/// 1 - 10^((with - without) / 10).
double nmse_improvement(double with_db, double without_db);

struct NmseWindow {
  std::size_t index = 0;
  std::size_t first_sample = 0;
  std::size_t size = 0;
  double nmse_db = 0.0;
  /// Trailing window shorter than the configured size.
  bool partial = false;
};

/// Non-overlapping windows over a stream of (y, y_hat) pairs. Feeding the
/// stream in any chunking yields the same windows.
class WindowedNmse {
 public:
  explicit WindowedNmse(std::size_t window = 100);

  /// Returns the window this sample completed, if any.
  std::optional<NmseWindow> push(double y, double y_hat);
  void push(std::span<const double> y, std::span<const double> y_hat);
  /// Closes the trailing partial window, if there is one.
  std::optional<NmseWindow> finish();

  const std::vector<NmseWindow>& windows() const { return windows_; }

 private:
  NmseWindow close(bool partial);

  std::size_t window_;
  std::size_t seen_ = 0;
  std::size_t count_ = 0;
  double err_ = 0.0;
  double energy_ = 0.0;
  std::vector<NmseWindow> windows_;
};

std::vector<NmseWindow> windowed_nmse(std::span<const double> y, std::span<const double> y_hat,
                                      std::size_t window = 100);

struct PdbPolicy {
  double beta = 3.0;
  double floor_s = 1e-3;
};

/// max(floor, beta * propagation delay of the path).
double assign_pdb(const TopologyGraph& g, const Path& path, const PdbPolicy& policy);

struct ViolationWindow {
  std::size_t index = 0;
  std::size_t size = 0;
  std::size_t predicted = 0;
  std::size_t actual = 0;
  std::size_t misclassified = 0;
  bool partial = false;
};

struct ViolationReport {
  std::size_t flows = 0;
  std::size_t predicted_violations = 0;
  std::size_t actual_violations = 0;
  std::size_t misclassified = 0;
  std::vector<ViolationWindow> windows;
};

/// A flow violates its SLA when its delay exceeds its PDB.
ViolationReport classify_and_report(std::span<const double> y_hat, std::span<const double> y,
                                    std::span<const double> pdb, std::size_t window = 100);

}  // namespace ndt
