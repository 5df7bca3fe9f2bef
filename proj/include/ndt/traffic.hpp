#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndt/topology.hpp"

namespace ndt {

using Rng = std::mt19937_64;

/// Seed for an independent stream identified by (base, stream, index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

class TrafficError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DistKind { Uniform, Exponential, Poisson, Deterministic };

/// Packet-size (bytes) or packet-rate (packets/s) law. Validated on
/// construction through the named factories.
class DistributionSpec {
 public:
  static DistributionSpec uniform(double lo, double hi);
  static DistributionSpec exponential(double mean);
  static DistributionSpec poisson(double mean);
  static DistributionSpec deterministic(double value);

  DistKind kind() const { return kind_; }
  /// Lower bound (Uniform) or the single parameter (mean / constant).
  double first() const { return first_; }
  /// Upper bound for Uniform; equals first() otherwise.
  double second() const { return second_; }
  double mean() const;
  DistributionSpec scaled(double factor) const;

  bool operator==(const DistributionSpec&) const = default;

 private:
  DistributionSpec(DistKind kind, double first, double second) : kind_(kind), first_(first), second_(second) {}

  DistKind kind_;
  double first_;
  double second_;
};

std::string to_string(DistKind kind);
nlohmann::json distribution_to_json(const DistributionSpec& spec);
DistributionSpec distribution_from_json(const nlohmann::json& j);

/// Positive byte count; continuous draws are rounded up, floor 1.
int sample_packet_size(const DistributionSpec& spec, Rng& rng);

/// Time to the next packet of a flow whose packet rate follows `rate`.
/// Exponential gives a Poisson process, Uniform(a,b) spreads gaps over
/// [1/b, 1/a], Poisson draws the gap in whole milliseconds and
/// Deterministic sends with constant spacing 1/K.
double sample_interarrival(const DistributionSpec& rate, Rng& rng);

/// Long-run packets per second implied by sample_interarrival.
double mean_packet_rate(const DistributionSpec& rate);

struct Phase {
  DistributionSpec packet_size;
  DistributionSpec packet_rate;
  double duration_s = 0.0;
  bool congestion = false;

  bool operator==(const Phase&) const = default;
};

class ScenarioSchedule {
 public:
  explicit ScenarioSchedule(std::vector<Phase> phases);

  const std::vector<Phase>& phases() const { return phases_; }
  std::size_t size() const { return phases_.size(); }
  const Phase& phase(std::size_t i) const { return phases_.at(i); }
  double total_duration() const;
  double phase_start(std::size_t i) const;
  /// Index of the phase containing time t; times past the end map to the last phase.
  std::size_t phase_at(double t) const;

  bool operator==(const ScenarioSchedule&) const = default;

 private:
  std::vector<Phase> phases_;
};

/// Four equal phases: Exponential, Poisson, Uniform, Deterministic with
/// congestion in the last one.
ScenarioSchedule default_drift_schedule(double total_time_s);

nlohmann::json schedule_to_json(const ScenarioSchedule& s);
ScenarioSchedule schedule_from_json(const nlohmann::json& j);
/// Accepts a file path or `default:<seconds>`.
ScenarioSchedule load_schedule(const std::string& arg);

struct FlowSpec {
  int flow_id = 0;
  NodeId origin = 0;
  NodeId destination = 0;
  double start_s = 0.0;
  double duration_s = 0.0;
  DistributionSpec packet_size = DistributionSpec::deterministic(1);
  DistributionSpec packet_rate = DistributionSpec::deterministic(1);
  int phase = 0;

  bool operator==(const FlowSpec&) const = default;
};

struct TrafficOptions {
  double flow_duration_s = 10.0;
  /// Multiplies every packet-rate parameter of the schedule.
  double rate_scale = 0.02;
  /// In congestion phases, expected offered load on the busiest directed
  /// link as a multiple of its capacity.
  double congestion_factor = 1.5;
};

/// Expected steady-state load of the busiest directed link, as a fraction
/// of capacity, for flows with the given laws arriving at `flows_per_second`.
double expected_bottleneck_load(const TopologyGraph& g, const DistributionSpec& size, const DistributionSpec& rate,
                                double flows_per_second, double flow_duration_s);

/// Flows start every 1/flows_per_second seconds, with (O, D) drawn
/// uniformly over ordered distinct node pairs.
std::vector<FlowSpec> generate_flows(const TopologyGraph& g, const ScenarioSchedule& sched, double flows_per_second,
                                     Rng& rng, const TrafficOptions& opts = {});

}  // namespace ndt
