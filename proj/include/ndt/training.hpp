#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ndt/labeling.hpp"
#include "ndt/vtwin.hpp"

namespace ndt {

/// Labels below this magnitude are clamped inside the loss.
inline constexpr double kMapeLabelFloor = 1e-6;

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 50;
  /// Minimum examples per step; whole snapshots are added until reached.
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Held out for reporting only.
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mean absolute percentage error in percent.
double mape(std::span<const double> y, std::span<const double> y_hat, std::size_t* clamped = nullptr);

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  std::int64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

enum class TrainStatus { Ok, Diverged };

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<EpochRecord> history;
  /// MAPE on the held-out split after training; NaN when the split is empty.
  double validation_mape = 0.0;
  std::size_t train_examples = 0;
  std::size_t validation_examples = 0;
  std::size_t clamped_labels = 0;
  TrainStatus status = TrainStatus::Ok;
  std::string diagnostic;
};

/// Bits-per-output-unit so that an untrained readout near 1 lands on the
/// typical delay scale: median over examples of y / sum(1 / capacity).
double fit_occupancy_unit(std::span<const LabeledExample* const> examples);

/// Fits normalization and occupancy scale on the training split, then runs
/// Adam on MAPE starting from `w0`'s parameters. The result carries version
/// w0.version + 1. With zero epochs the weights are returned as given apart
/// from the version.
TrainResult train(const ModelWeights& w0, std::span<const LabeledExample> data, const TrainConfig& cfg);

/// MAPE and its gradient over one hypergraph. `grad` is overwritten.
double mape_loss_and_grad(const HeteroGraph& graph, std::span<const double> y, const ModelWeights& w,
                          std::span<double> grad);

/// Largest relative disagreement between central finite differences with
/// step `h` and the analytic gradient, over up to `n_params` parameters
/// chosen at random. The difference quotients are evaluated in extended
/// precision so that parameters with gradients near 1e-7 are not swamped by
/// rounding in the loss.
double gradient_check(const ModelWeights& w, std::span<const LabeledExample> batch, double h, std::uint64_t seed = 0,
                      std::size_t n_params = 200);

}  // namespace ndt
