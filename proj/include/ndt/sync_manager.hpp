#pragma once

#include <cstdint>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ndt/datastore.hpp"
#include "ndt/kswin.hpp"
#include "ndt/vtwin.hpp"

namespace ndt {

class SyncError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SyncMode { Idle, Retraining };

std::string to_string(SyncMode mode);

/// Holds the serving weights. Readers get an immutable snapshot; replacing
/// it never exposes a partially written model.
class DeployedModel {
 public:
  explicit DeployedModel(std::shared_ptr<const ModelWeights> w) : w_(std::move(w)) {}

  std::shared_ptr<const ModelWeights> get() const {
    std::lock_guard lock(mu_);
    return w_;
  }
  void set(std::shared_ptr<const ModelWeights> w) {
    std::lock_guard lock(mu_);
    w_ = std::move(w);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const ModelWeights> w_;
};

struct ControlRecord {
  /// Scenario clock, seconds.
  double time_s = 0.0;
  std::string event;
  SyncMode mode = SyncMode::Idle;
  std::uint64_t version = 0;
  std::string detail;
};

/// Produces weights with exactly `next_version` from the labeled-data
/// snapshot taken when the drift arrived. Runs off the caller's thread.
using RetrainJob = std::function<ModelWeights(std::uint64_t next_version)>;
/// Called synchronously in on_drift to snapshot data and build the job.
using RetrainFactory = std::function<RetrainJob(const DriftEvent& event, double time_s)>;

class SyncManager {
 public:
  SyncManager(ModelWeights initial, WeightsStore& archive, RetrainFactory factory);
  ~SyncManager();

  SyncManager(const SyncManager&) = delete;
  SyncManager& operator=(const SyncManager&) = delete;

  /// Starts a retrain when idle; while retraining the event is only logged.
  /// Returns true if a retrain was launched.
  bool on_drift(const DriftEvent& event, double time_s);

  /// Waits for the running retrain and deploys its result. Returns true on a swap.
  bool finish_retrain(double time_s);

  /// Archives the outgoing weights and deploys `new_w`. On archive failure
  /// the old weights stay deployed and the manager stays in Retraining.
  void on_retrain_complete(ModelWeights new_w, double time_s);

  /// Redeploys an archived version. Only allowed while idle.
  void rollback(std::uint64_t version, double time_s);

  std::shared_ptr<const ModelWeights> deployed() const { return deployed_.get(); }
  SyncMode mode() const;
  std::uint64_t deployed_version() const;
  std::optional<DriftEvent> last_event() const;
  std::size_t retrains_launched() const;
  std::vector<ControlRecord> log() const;

 private:
  void record(double time_s, std::string event, std::string detail = {});
  std::uint64_t next_version() const;

  mutable std::mutex mu_;
  WeightsStore& archive_;
  RetrainFactory factory_;
  DeployedModel deployed_;
  SyncMode mode_ = SyncMode::Idle;
  std::optional<DriftEvent> last_event_;
  std::uint64_t expected_version_ = 0;
  std::uint64_t max_version_ = 0;
  std::size_t launched_ = 0;
  std::future<ModelWeights> pending_;
  std::optional<ModelWeights> unarchived_;
  std::vector<ControlRecord> log_;
};

}  // namespace ndt
