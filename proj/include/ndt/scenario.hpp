#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndt/evaluation.hpp"
#include "ndt/kswin.hpp"
#include "ndt/labeling.hpp"
#include "ndt/training.hpp"

namespace ndt {

struct RunConfig {
  std::filesystem::path topology;
  /// File path or `default:<seconds>`.
  std::string schedule = "default:400";
  std::uint64_t seed = 1;
  bool sync = true;
  /// Also score the initial model, never retrained, on the same stream.
  bool compare = false;
  KswinConfig kswin;
  TrainConfig train;
  ModelConfig model;
  PdbPolicy pdb;
  std::filesystem::path out_dir = "ndt_out";

  TrafficOptions traffic;
  double flows_per_second = 5.0;
  /// Flows starting in the same interval of this length are simulated together.
  double snapshot_s = 10.0;
  /// Independent realizations of the schedule held in the labeled database.
  int corpus_replicas = 4;
  /// Stream samples between the start of a retrain and its deployment.
  std::size_t retrain_latency = 50;
  std::size_t nmse_window = 100;

  void validate() const;
};

struct DriftRecord {
  DriftEvent event;
  double time_s = 0.0;
  int phase = 0;
  bool retrain_launched = false;
};

/// Mean windowed NMSE before and after one detected drift. A window
/// belongs to the detection interval holding its midpoint sample.
struct DriftSegment {
  std::int64_t sample_index = 0;
  double pre_sync_db = 0.0;
  double post_sync_db = 0.0;
  double pre_frozen_db = 0.0;
  double post_frozen_db = 0.0;
  /// Linear-MSE reduction of sync over frozen after the drift.
  double improvement = 0.0;
};

struct RunArtifacts {
  std::vector<NmseWindow> nmse_sync;
  std::vector<NmseWindow> nmse_frozen;
  std::vector<DriftRecord> drifts;
  std::vector<DriftSegment> segments;
  std::size_t retrains = 0;
  /// Weights version that produced each streamed prediction.
  std::vector<std::uint64_t> prediction_versions;
  ViolationReport sla_sync;
  ViolationReport sla_frozen;
  /// Detector input: average traffic rate of each streamed flow.
  std::vector<double> rate_stream;
  /// Stream index of the first sample of each phase after the first.
  std::vector<std::int64_t> phase_boundaries;
  std::size_t undelivered_flows = 0;
  nlohmann::json summary;
};

/// Simulated, labeled stream of flows in start-time order, with snapshot ids.
struct LabeledStream {
  std::vector<LabeledExample> examples;
  std::size_t undelivered = 0;
};

/// One realization of the schedule simulated as a single run, labeled in
/// snapshots whose link loads cover only the snapshot's own flows' lifetime.
LabeledStream simulate_schedule(const TopologyGraph& g, const ScenarioSchedule& sched, const RunConfig& cfg,
                                std::uint64_t realization);

/// Runs the closed loop and writes nmse_sync.csv, nmse_frozen.csv (with
/// compare), drifts.csv, sla_report.txt, summary.json, control.log and
/// train.log into cfg.out_dir.
RunArtifacts run_scenario(const RunConfig& cfg);

struct SweepRow {
  std::size_t window = 0;
  std::size_t detections = 0;
};

/// One detector pass per window size over a recorded rate stream.
std::vector<SweepRow> window_sweep(std::span<const double> stream, const KswinConfig& base,
                                   std::span<const std::size_t> windows);

/// Same, over the stream the scenario would replay.
std::vector<SweepRow> window_sweep(const RunConfig& cfg, std::span<const std::size_t> windows);

}  // namespace ndt
