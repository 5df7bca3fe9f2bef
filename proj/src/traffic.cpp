#include "ndt/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ndt {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over the combined key
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

DistributionSpec DistributionSpec::uniform(double lo, double hi) {
  if (!(lo > 0.0) || !(lo < hi)) {
    throw TrafficError("Uniform(a,b) requires 0 < a < b, got (" + std::to_string(lo) + "," + std::to_string(hi) + ")");
  }
  return {DistKind::Uniform, lo, hi};
}

DistributionSpec DistributionSpec::exponential(double mean) {
  if (!(mean > 0.0)) throw TrafficError("Exponential mean must be > 0");
  return {DistKind::Exponential, mean, mean};
}

DistributionSpec DistributionSpec::poisson(double mean) {
  if (!(mean > 0.0)) throw TrafficError("Poisson mean must be > 0");
  return {DistKind::Poisson, mean, mean};
}

DistributionSpec DistributionSpec::deterministic(double value) {
  if (!(value > 0.0)) throw TrafficError("Deterministic constant must be > 0");
  return {DistKind::Deterministic, value, value};
}

double DistributionSpec::mean() const {
  return kind_ == DistKind::Uniform ? 0.5 * (first_ + second_) : first_;
}

DistributionSpec DistributionSpec::scaled(double factor) const {
  if (!(factor > 0.0)) throw TrafficError("scale factor must be > 0");
  return {kind_, first_ * factor, second_ * factor};
}

std::string to_string(DistKind kind) {
  switch (kind) {
    case DistKind::Uniform: return "uniform";
    case DistKind::Exponential: return "exponential";
    case DistKind::Poisson: return "poisson";
    case DistKind::Deterministic: return "deterministic";
  }
  return "?";
}

nlohmann::json distribution_to_json(const DistributionSpec& spec) {
  switch (spec.kind()) {
    case DistKind::Uniform: return {{"kind", "uniform"}, {"min", spec.first()}, {"max", spec.second()}};
    case DistKind::Exponential: return {{"kind", "exponential"}, {"mean", spec.first()}};
    case DistKind::Poisson: return {{"kind", "poisson"}, {"mean", spec.first()}};
    case DistKind::Deterministic: return {{"kind", "deterministic"}, {"value", spec.first()}};
  }
  return {};
}

DistributionSpec distribution_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return DistributionSpec::uniform(j.at("min").get<double>(), j.at("max").get<double>());
  if (kind == "exponential") return DistributionSpec::exponential(j.at("mean").get<double>());
  if (kind == "poisson") return DistributionSpec::poisson(j.at("mean").get<double>());
  if (kind == "deterministic") return DistributionSpec::deterministic(j.at("value").get<double>());
  throw TrafficError("unknown distribution kind '" + kind + "'");
}

int sample_packet_size(const DistributionSpec& spec, Rng& rng) {
  double draw = 0.0;
  switch (spec.kind()) {
    case DistKind::Uniform:
      draw = std::uniform_real_distribution<double>(spec.first(), spec.second())(rng);
      break;
    case DistKind::Exponential:
      draw = std::exponential_distribution<double>(1.0 / spec.first())(rng);
      break;
    case DistKind::Poisson:
      draw = static_cast<double>(std::poisson_distribution<long>(spec.first())(rng));
      break;
    case DistKind::Deterministic:
      draw = spec.first();
      break;
  }
  return std::max(1, static_cast<int>(std::ceil(draw)));
}

double sample_interarrival(const DistributionSpec& rate, Rng& rng) {
  switch (rate.kind()) {
    case DistKind::Uniform:
      return std::uniform_real_distribution<double>(1.0 / rate.second(), 1.0 / rate.first())(rng);
    case DistKind::Exponential:
      return std::exponential_distribution<double>(rate.first())(rng);
    case DistKind::Poisson:
      return static_cast<double>(std::poisson_distribution<long>(1000.0 / rate.first())(rng)) / 1000.0;
    case DistKind::Deterministic:
      return 1.0 / rate.first();
  }
  return 0.0;
}

double mean_packet_rate(const DistributionSpec& rate) {
  if (rate.kind() == DistKind::Uniform) {
    return 2.0 / (1.0 / rate.first() + 1.0 / rate.second());
  }
  return rate.first();
}

ScenarioSchedule::ScenarioSchedule(std::vector<Phase> phases) : phases_(std::move(phases)) {
  if (phases_.empty()) throw TrafficError("schedule must contain at least one phase");
  for (std::size_t i = 0; i < phases_.size(); ++i) {
    if (!(phases_[i].duration_s > 0.0)) {
      throw TrafficError("phase " + std::to_string(i) + ": duration must be > 0");
    }
  }
}

double ScenarioSchedule::total_duration() const {
  double t = 0.0;
  for (const auto& p : phases_) t += p.duration_s;
  return t;
}

double ScenarioSchedule::phase_start(std::size_t i) const {
  double t = 0.0;
  for (std::size_t k = 0; k < i && k < phases_.size(); ++k) t += phases_[k].duration_s;
  return t;
}

std::size_t ScenarioSchedule::phase_at(double t) const {
  double end = 0.0;
  for (std::size_t i = 0; i < phases_.size(); ++i) {
    end += phases_[i].duration_s;
    if (t < end) return i;
  }
  return phases_.size() - 1;
}

ScenarioSchedule default_drift_schedule(double total_time_s) {
  if (!(total_time_s > 0.0)) throw TrafficError("total time must be > 0");
  const double d = total_time_s / 4.0;
  return ScenarioSchedule({
      {DistributionSpec::exponential(1024), DistributionSpec::exponential(1024), d, false},
      {DistributionSpec::poisson(2048), DistributionSpec::poisson(2048), d, false},
      {DistributionSpec::uniform(512, 1024), DistributionSpec::uniform(512, 1024), d, false},
      {DistributionSpec::deterministic(512), DistributionSpec::deterministic(512), d, true},
  });
}

nlohmann::json schedule_to_json(const ScenarioSchedule& s) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : s.phases()) {
    phases.push_back({{"packet_size", distribution_to_json(p.packet_size)},
                      {"packet_rate", distribution_to_json(p.packet_rate)},
                      {"duration_s", p.duration_s},
                      {"congestion", p.congestion}});
  }
  return {{"phases", phases}};
}

ScenarioSchedule schedule_from_json(const nlohmann::json& j) {
  try {
    std::vector<Phase> phases;
    for (const auto& jp : j.at("phases")) {
      phases.push_back({distribution_from_json(jp.at("packet_size")), distribution_from_json(jp.at("packet_rate")),
                        jp.at("duration_s").get<double>(), jp.value("congestion", false)});
    }
    return ScenarioSchedule(std::move(phases));
  } catch (const nlohmann::json::exception& e) {
    throw TrafficError(std::string("schedule parse error: ") + e.what());
  }
}

ScenarioSchedule load_schedule(const std::string& arg) {
  constexpr std::string_view prefix = "default:";
  if (arg.starts_with(prefix)) {
    double seconds = 0.0;
    try {
      seconds = std::stod(arg.substr(prefix.size()));
    } catch (const std::exception&) {
      throw TrafficError("bad schedule argument '" + arg + "'");
    }
    return default_drift_schedule(seconds);
  }
  std::ifstream in(arg);
  if (!in) throw TrafficError("cannot open schedule file " + arg);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw TrafficError("schedule parse error in " + arg + ": " + e.what());
  }
  return schedule_from_json(doc);
}

double expected_bottleneck_load(const TopologyGraph& g, const DistributionSpec& size, const DistributionSpec& rate,
                                double flows_per_second, double flow_duration_s) {
  const auto& nodes = g.nodes();
  std::vector<double> paths_through(2 * g.link_count(), 0.0);
  double pairs = 0.0;
  for (NodeId o : nodes) {
    for (NodeId d : nodes) {
      if (o == d) continue;
      pairs += 1.0;
      Path p;
      try {
        p = shortest_path(g, o, d);
      } catch (const RoutingError&) {
        continue;
      }
      for (const auto& hop : path_hops(g, o, p)) {
        paths_through[static_cast<std::size_t>(hop.queue(g.link(hop.link)))] += 1.0;
      }
    }
  }
  const double concurrent = flows_per_second * flow_duration_s;
  const double flow_bps = mean_packet_rate(rate) * size.mean() * 8.0;
  double worst = 0.0;
  for (std::size_t q = 0; q < paths_through.size(); ++q) {
    const double cap = g.link(static_cast<LinkIndex>(q / 2)).capacity_bps;
    worst = std::max(worst, concurrent * (paths_through[q] / pairs) * flow_bps / cap);
  }
  return worst;
}

std::vector<FlowSpec> generate_flows(const TopologyGraph& g, const ScenarioSchedule& sched, double flows_per_second,
                                     Rng& rng, const TrafficOptions& opts) {
  if (!(flows_per_second > 0.0)) throw TrafficError("flows_per_second must be > 0");
  if (!(opts.flow_duration_s > 0.0)) throw TrafficError("flow duration must be > 0");

  // Per-phase packet-rate law after scaling (and congestion calibration).
  std::vector<DistributionSpec> rates;
  for (const auto& phase : sched.phases()) {
    DistributionSpec r = phase.packet_rate.scaled(opts.rate_scale);
    if (phase.congestion) {
      const double load =
          expected_bottleneck_load(g, phase.packet_size, r, flows_per_second, opts.flow_duration_s);
      if (load > 0.0 && load < opts.congestion_factor) r = r.scaled(opts.congestion_factor / load);
    }
    rates.push_back(r);
  }

  const auto& nodes = g.nodes();
  const auto n = nodes.size();
  const auto count = static_cast<std::size_t>(std::floor(sched.total_duration() * flows_per_second + 1e-9));
  std::uniform_int_distribution<std::size_t> pick_pair(0, n * (n - 1) - 1);

  std::vector<FlowSpec> flows;
  flows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    FlowSpec f;
    f.flow_id = static_cast<int>(k);
    f.start_s = static_cast<double>(k) / flows_per_second;
    f.duration_s = opts.flow_duration_s;
    const std::size_t pair = pick_pair(rng);
    const std::size_t oi = pair / (n - 1);
    std::size_t di = pair % (n - 1);
    if (di >= oi) ++di;
    f.origin = nodes[oi];
    f.destination = nodes[di];
    const std::size_t p = sched.phase_at(f.start_s);
    f.phase = static_cast<int>(p);
    f.packet_size = sched.phase(p).packet_size;
    f.packet_rate = rates[p];
    flows.push_back(f);
  }
  return flows;
}

}  // namespace ndt
