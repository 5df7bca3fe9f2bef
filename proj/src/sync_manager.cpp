#include "ndt/sync_manager.hpp"

#include <algorithm>

namespace ndt {

std::string to_string(SyncMode mode) { return mode == SyncMode::Idle ? "idle" : "retraining"; }

SyncManager::SyncManager(ModelWeights initial, WeightsStore& archive, RetrainFactory factory)
    : archive_(archive),
      factory_(std::move(factory)),
      deployed_(std::make_shared<const ModelWeights>(std::move(initial))) {
  max_version_ = deployed_.get()->version;
  for (const auto& e : archive_.entries()) max_version_ = std::max(max_version_, e.version);
}

SyncManager::~SyncManager() {
  if (pending_.valid()) pending_.wait();
}

void SyncManager::record(double time_s, std::string event, std::string detail) {
  log_.push_back({time_s, std::move(event), mode_, deployed_.get()->version, std::move(detail)});
}

std::uint64_t SyncManager::next_version() const { return max_version_ + 1; }

bool SyncManager::on_drift(const DriftEvent& event, double time_s) {
  std::lock_guard lock(mu_);
  last_event_ = event;
  const std::string detail = "sample=" + std::to_string(event.sample_index);
  if (mode_ == SyncMode::Retraining) {
    record(time_s, "drift_ignored", detail);
    return false;
  }
  RetrainJob job = factory_(event, time_s);
  expected_version_ = next_version();
  mode_ = SyncMode::Retraining;
  ++launched_;
  pending_ = std::async(std::launch::async, std::move(job), expected_version_);
  record(time_s, "retrain_start", detail + " target=v" + std::to_string(expected_version_));
  return true;
}

bool SyncManager::finish_retrain(double time_s) {
  std::future<ModelWeights> job;
  std::optional<ModelWeights> retry;
  {
    std::lock_guard lock(mu_);
    if (mode_ != SyncMode::Retraining) return false;
    if (pending_.valid()) {
      job = std::move(pending_);
    } else if (unarchived_) {
      retry = std::move(unarchived_);
      unarchived_.reset();
    } else {
      return false;
    }
  }
  if (job.valid()) {
    try {
      retry = job.get();
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      mode_ = SyncMode::Idle;
      record(time_s, "retrain_failed", e.what());
      return false;
    }
  }
  on_retrain_complete(std::move(*retry), time_s);
  return deployed_version() == expected_version_;
}

void SyncManager::on_retrain_complete(ModelWeights new_w, double time_s) {
  std::lock_guard lock(mu_);
  if (mode_ != SyncMode::Retraining) throw SyncError("retrain completion while idle");
  if (new_w.version != expected_version_) {
    throw SyncError("retrain produced v" + std::to_string(new_w.version) + ", expected v" +
                    std::to_string(expected_version_));
  }
  const auto old = deployed_.get();
  try {
    if (!archive_.contains(old->version)) {
      archive_.save_weights(*old, time_s);
      record(time_s, "archive", "v" + std::to_string(old->version));
    }
  } catch (const StoreError& e) {
    unarchived_ = std::move(new_w);
    record(time_s, "archive_failed", e.what());
    return;
  }
  deployed_.set(std::make_shared<const ModelWeights>(std::move(new_w)));
  max_version_ = std::max(max_version_, expected_version_);
  mode_ = SyncMode::Idle;
  record(time_s, "deploy", "v" + std::to_string(expected_version_));
}

void SyncManager::rollback(std::uint64_t version, double time_s) {
  std::lock_guard lock(mu_);
  if (mode_ != SyncMode::Idle) throw SyncError("rollback rejected while retraining");
  if (!archive_.contains(version)) throw SyncError("unknown weights version " + std::to_string(version));
  auto restored = std::make_shared<const ModelWeights>(archive_.load_weights(version));
  const auto old = deployed_.get();
  if (!archive_.contains(old->version)) archive_.save_weights(*old, time_s);
  deployed_.set(std::move(restored));
  record(time_s, "rollback", "v" + std::to_string(version));
}

SyncMode SyncManager::mode() const {
  std::lock_guard lock(mu_);
  return mode_;
}

std::uint64_t SyncManager::deployed_version() const { return deployed_.get()->version; }

std::optional<DriftEvent> SyncManager::last_event() const {
  std::lock_guard lock(mu_);
  return last_event_;
}

std::size_t SyncManager::retrains_launched() const {
  std::lock_guard lock(mu_);
  return launched_;
}

std::vector<ControlRecord> SyncManager::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

}  // namespace ndt
