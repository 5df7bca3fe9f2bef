#include "ndt/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>

#include "ndt/datastore.hpp"
#include "ndt/sync_manager.hpp"

namespace ndt {

using nlohmann::json;

namespace {

// Seed stream ids.
constexpr std::uint64_t kFlowSeeds = 1;
constexpr std::uint64_t kSimSeeds = 2;
constexpr std::uint64_t kInitSeeds = 3;
constexpr std::uint64_t kTrainSeeds = 4;
constexpr std::uint64_t kDetectorSeeds = 5;

constexpr std::int64_t kSnapshotsPerRealization = 1'000'000;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string db(double v) { return std::isinf(v) ? (v < 0 ? "-inf" : "inf") : fmt("%.4f", v); }

double mean_db(const std::vector<NmseWindow>& windows, std::int64_t from, std::int64_t to) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    // Midpoint, so a window straddling a cut counts where most samples fall.
    const auto mid = static_cast<std::int64_t>(w.first_sample + w.size / 2);
    if (mid >= from && mid < to) {
      sum += w.nmse_db;
      ++n;
    }
  }
  return n == 0 ? std::nan("") : sum / static_cast<double>(n);
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_nmse(const std::filesystem::path& p, const std::vector<NmseWindow>& windows) {
  std::ofstream out(p);
  out << "window,first_sample,size,partial,nmse_db\n";
  for (const auto& w : windows) {
    out << w.index << ',' << w.first_sample << ',' << w.size << ',' << (w.partial ? 1 : 0) << ',' << db(w.nmse_db)
        << '\n';
  }
}

void write_sla(std::ostream& out, const char* label, const ViolationReport& r) {
  out << label << ": flows=" << r.flows << " predicted_violations=" << r.predicted_violations
      << " actual_violations=" << r.actual_violations << " misclassified=" << r.misclassified << '\n';
}

ModelWeights fresh_weights(const RunConfig& cfg, std::uint64_t version) {
  Rng rng(derive_seed(cfg.seed, kInitSeeds, version));
  ModelWeights w = init_weights(rng, cfg.model);
  w.version = version - 1;
  return w;
}

std::vector<LabeledExample> load_phase(const LabeledStore& store, const ScenarioSchedule& sched, std::size_t phase) {
  const double from = sched.phase_start(phase);
  const double to = from + sched.phase(phase).duration_s;
  const auto scan = store.scan({from, to});
  if (!scan.corrupt.empty()) {
    throw StoreError(std::to_string(scan.corrupt.size()) + " corrupt labeled records in " + store.path().string());
  }
  std::vector<LabeledExample> out;
  out.reserve(scan.records.size());
  for (const auto& r : scan.records) out.push_back(to_example(r));
  return out;
}

struct TrainLog {
  std::mutex mu;
  std::map<std::uint64_t, std::vector<std::string>> lines;

  void add(std::uint64_t version, double time_s, const TrainResult& r) {
    std::vector<std::string> out;
    for (const auto& e : r.history) {
      out.push_back(json{{"version", version}, {"epoch", e.epoch}, {"mean_loss", num(e.mean_loss)}, {"time_s", time_s}}
                        .dump());
    }
    out.push_back(json{{"version", version},
                       {"status", r.status == TrainStatus::Ok ? "ok" : "diverged"},
                       {"train_examples", r.train_examples},
                       {"validation_examples", r.validation_examples},
                       {"validation_mape", num(r.validation_mape)},
                       {"clamped_labels", r.clamped_labels},
                       {"diagnostic", r.diagnostic},
                       {"time_s", time_s}}
                      .dump());
    std::lock_guard lock(mu);
    lines[version] = std::move(out);
  }
};

}  // namespace

void RunConfig::validate() const {
  kswin.validate();
  train.validate();
  if (!(flows_per_second > 0.0)) throw std::invalid_argument("flows per second must be > 0");
  if (!(snapshot_s > 0.0)) throw std::invalid_argument("snapshot length must be > 0");
  if (corpus_replicas < 1) throw std::invalid_argument("need at least one corpus replica");
  if (nmse_window == 0) throw std::invalid_argument("NMSE window must be >= 1");
  if (!(pdb.floor_s > 0.0)) throw std::invalid_argument("PDB floor must be > 0");
}

LabeledStream simulate_schedule(const TopologyGraph& g, const ScenarioSchedule& sched, const RunConfig& cfg,
                                std::uint64_t realization) {
  Rng flow_rng(derive_seed(cfg.seed, kFlowSeeds, realization));
  const auto flows = generate_flows(g, sched, cfg.flows_per_second, flow_rng, cfg.traffic);

  Rng sim_rng(derive_seed(cfg.seed, kSimSeeds, realization));
  const SimResult sim = simulate(g, flows, sim_rng);

  LabeledStream out;
  std::size_t begin = 0;
  while (begin < flows.size()) {
    const auto snapshot = static_cast<std::int64_t>(std::floor(flows[begin].start_s / cfg.snapshot_s));
    std::size_t end = begin;
    double to_s = flows[begin].start_s;
    while (end < flows.size() && static_cast<std::int64_t>(std::floor(flows[end].start_s / cfg.snapshot_s)) == snapshot) {
      to_s = std::max(to_s, flows[end].start_s + flows[end].duration_s);
      ++end;
    }
    LabelStats stats;
    auto labeled = label_window(g, flows, sim, begin, end, flows[begin].start_s, to_s, &stats);
    out.undelivered += stats.undelivered_flows;
    const std::int64_t id = static_cast<std::int64_t>(realization) * kSnapshotsPerRealization + snapshot;
    for (auto& ex : labeled) {
      ex.snapshot = id;
      out.examples.push_back(std::move(ex));
    }
    begin = end;
  }
  return out;
}

RunArtifacts run_scenario(const RunConfig& cfg) {
  cfg.validate();
  const TopologyGraph g = load_topology(cfg.topology);
  const ScenarioSchedule sched = load_schedule(cfg.schedule);

  std::filesystem::create_directories(cfg.out_dir);
  for (const char* stale : {"traffic.jsonl", "labeled.jsonl"}) std::filesystem::remove(cfg.out_dir / stale);
  std::filesystem::remove_all(cfg.out_dir / "weights");
  TrafficStore traffic_db(cfg.out_dir / "traffic.jsonl");
  LabeledStore labeled_db(cfg.out_dir / "labeled.jsonl");
  WeightsStore weights_db(cfg.out_dir / "weights");

  RunArtifacts art;

  // Labeled database: independent realizations collected ahead of time.
  std::size_t corpus_size = 0;
  for (int r = 1; r <= cfg.corpus_replicas; ++r) {
    const auto corpus = simulate_schedule(g, sched, cfg, static_cast<std::uint64_t>(r));
    for (const auto& ex : corpus.examples) labeled_db.append(to_labeled_record(ex));
    corpus_size += corpus.examples.size();
  }

  // Initial twin from the first phase.
  TrainLog train_log;
  auto train_on = [&cfg, &train_log](std::vector<LabeledExample> data, std::uint64_t version, double time_s) {
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, kTrainSeeds, version);
    TrainResult r = train(fresh_weights(cfg, version), data, tc);
    train_log.add(version, time_s, r);
    return std::move(r.weights);
  };
  const ModelWeights initial = train_on(load_phase(labeled_db, sched, 0), 1, 0.0);
  const auto frozen = std::make_shared<const ModelWeights>(initial);

  SyncManager manager(initial, weights_db, [&](const DriftEvent&, double time_s) -> RetrainJob {
    const std::size_t phase = sched.phase_at(time_s);
    auto data = std::make_shared<std::vector<LabeledExample>>(load_phase(labeled_db, sched, phase));
    return [data, time_s, &train_on](std::uint64_t next) { return train_on(std::move(*data), next, time_s); };
  });

  // Operational stream.
  const auto stream = simulate_schedule(g, sched, cfg, 0);
  art.undelivered_flows = stream.undelivered;
  KswinConfig kcfg = cfg.kswin;
  kcfg.seed = derive_seed(cfg.seed, kDetectorSeeds, 0);
  KswinDetector detector(kcfg);
  WindowedNmse nmse_sync(cfg.nmse_window), nmse_frozen(cfg.nmse_window);
  std::vector<double> y_all, pred_sync_all, pred_frozen_all, pdb_all;
  std::int64_t launch_sample = -1;
  int last_phase = 0;

  const auto& ex = stream.examples;
  std::size_t begin = 0;
  while (begin < ex.size()) {
    std::size_t end = begin;
    while (end < ex.size() && ex[end].snapshot == ex[begin].snapshot) ++end;
    const double now = ex[begin].flow.start_s;

    if (manager.mode() == SyncMode::Retraining &&
        static_cast<std::int64_t>(begin) >= launch_sample + static_cast<std::int64_t>(cfg.retrain_latency)) {
      manager.finish_retrain(now);
    }

    const std::span<const LabeledExample> snap(ex.data() + begin, end - begin);
    const HeteroGraph graph = build_hypergraph(snap);
    const auto deployed = manager.deployed();
    const auto pred_sync = predict_delay(graph, *deployed);
    const auto pred_frozen = cfg.compare ? predict_delay(graph, *frozen) : std::vector<double>{};

    for (std::size_t i = 0; i < snap.size(); ++i) {
      const auto& e = snap[i];
      const auto idx = static_cast<std::int64_t>(begin + i);
      if (e.flow.phase != last_phase) {
        art.phase_boundaries.push_back(idx);
        last_phase = e.flow.phase;
      }
      y_all.push_back(e.y);
      pred_sync_all.push_back(pred_sync[i]);
      nmse_sync.push(e.y, pred_sync[i]);
      if (cfg.compare) {
        pred_frozen_all.push_back(pred_frozen[i]);
        nmse_frozen.push(e.y, pred_frozen[i]);
      }
      pdb_all.push_back(assign_pdb(g, e.path, cfg.pdb));
      art.prediction_versions.push_back(deployed->version);
      traffic_db.append(to_traffic_record(e));

      const double rate = e.x_f[flow_feature::kTrafficRate];
      art.rate_stream.push_back(rate);
      if (!cfg.sync) continue;
      if (const auto event = detector.update(rate)) {
        DriftRecord d{*event, e.flow.start_s, e.flow.phase, false};
        d.retrain_launched = manager.on_drift(*event, e.flow.start_s);
        if (d.retrain_launched) launch_sample = event->sample_index;
        art.drifts.push_back(d);
      }
    }
    begin = end;
  }
  const double end_time = sched.total_duration();
  if (manager.mode() == SyncMode::Retraining) manager.finish_retrain(end_time);
  nmse_sync.finish();
  nmse_frozen.finish();
  art.nmse_sync = nmse_sync.windows();
  art.nmse_frozen = nmse_frozen.windows();
  art.retrains = manager.retrains_launched();

  art.sla_sync = classify_and_report(pred_sync_all, y_all, pdb_all, cfg.nmse_window);
  if (cfg.compare) art.sla_frozen = classify_and_report(pred_frozen_all, y_all, pdb_all, cfg.nmse_window);

  // Per-drift NMSE before and after, over detection intervals.
  std::vector<std::int64_t> cuts{0};
  for (const auto& d : art.drifts) cuts.push_back(d.event.sample_index);
  cuts.push_back(static_cast<std::int64_t>(y_all.size()));
  for (std::size_t i = 0; i < art.drifts.size(); ++i) {
    DriftSegment s;
    s.sample_index = cuts[i + 1];
    s.pre_sync_db = mean_db(art.nmse_sync, cuts[i], cuts[i + 1]);
    s.post_sync_db = mean_db(art.nmse_sync, cuts[i + 1], cuts[i + 2]);
    if (cfg.compare) {
      s.pre_frozen_db = mean_db(art.nmse_frozen, cuts[i], cuts[i + 1]);
      s.post_frozen_db = mean_db(art.nmse_frozen, cuts[i + 1], cuts[i + 2]);
      s.improvement = nmse_improvement(s.post_sync_db, s.post_frozen_db);
    } else {
      s.pre_frozen_db = s.post_frozen_db = s.improvement = std::nan("");
    }
    art.segments.push_back(s);
  }

  // Files.
  write_nmse(cfg.out_dir / "nmse_sync.csv", art.nmse_sync);
  if (cfg.compare) write_nmse(cfg.out_dir / "nmse_frozen.csv", art.nmse_frozen);
  {
    std::ofstream out(cfg.out_dir / "drifts.csv");
    out << "sample_index,time_s,phase,statistic,p_value,retrain\n";
    for (const auto& d : art.drifts) {
      out << d.event.sample_index << ',' << fmt("%.3f", d.time_s) << ',' << d.phase << ','
          << fmt("%.6f", d.event.statistic) << ',' << fmt("%.6e", d.event.p_value) << ','
          << (d.retrain_launched ? 1 : 0) << '\n';
    }
  }
  {
    std::ofstream out(cfg.out_dir / "sla_report.txt");
    out << "pdb = max(" << fmt("%g", cfg.pdb.floor_s) << " s, " << fmt("%g", cfg.pdb.beta)
        << " x path propagation delay)\n";
    write_sla(out, "sync", art.sla_sync);
    if (cfg.compare) write_sla(out, "frozen", art.sla_frozen);
    out << "\nwindow,size,actual,predicted_sync,misclassified_sync";
    if (cfg.compare) out << ",predicted_frozen,misclassified_frozen";
    out << '\n';
    for (std::size_t i = 0; i < art.sla_sync.windows.size(); ++i) {
      const auto& w = art.sla_sync.windows[i];
      out << w.index << ',' << w.size << ',' << w.actual << ',' << w.predicted << ',' << w.misclassified;
      if (cfg.compare) out << ',' << art.sla_frozen.windows[i].predicted << ',' << art.sla_frozen.windows[i].misclassified;
      out << '\n';
    }
  }
  {
    std::ofstream out(cfg.out_dir / "control.log");
    for (const auto& r : manager.log()) {
      out << json{{"time_s", r.time_s}, {"event", r.event}, {"mode", to_string(r.mode)}, {"version", r.version},
                  {"detail", r.detail}}
                 .dump()
          << '\n';
    }
  }
  {
    std::ofstream out(cfg.out_dir / "train.log");
    for (const auto& [version, lines] : train_log.lines) {
      for (const auto& l : lines) out << l << '\n';
    }
  }

  json drifts = json::array();
  for (std::size_t i = 0; i < art.drifts.size(); ++i) {
    const auto& d = art.drifts[i];
    const auto& s = art.segments[i];
    drifts.push_back({{"sample_index", d.event.sample_index},
                      {"time_s", d.time_s},
                      {"phase", d.phase},
                      {"retrain", d.retrain_launched},
                      {"pre_sync_db", num(s.pre_sync_db)},
                      {"post_sync_db", num(s.post_sync_db)},
                      {"pre_frozen_db", num(s.pre_frozen_db)},
                      {"post_frozen_db", num(s.post_frozen_db)},
                      {"improvement", num(s.improvement)}});
  }
  art.summary = {
      {"topology", g.name()},
      {"schedule", cfg.schedule},
      {"seed", cfg.seed},
      {"sync", cfg.sync},
      {"compare", cfg.compare},
      {"kswin", {{"alpha", cfg.kswin.alpha}, {"window_size", cfg.kswin.window_size}, {"stat_size", cfg.kswin.stat_size}}},
      {"train", {{"epochs", cfg.train.epochs}, {"learning_rate", cfg.train.learning_rate}, {"batch_size", cfg.train.batch_size}}},
      {"pdb", {{"beta", cfg.pdb.beta}, {"floor_s", cfg.pdb.floor_s}}},
      {"stream_examples", y_all.size()},
      {"corpus_examples", corpus_size},
      {"undelivered_flows", art.undelivered_flows},
      {"phase_boundaries", art.phase_boundaries},
      {"retrains", art.retrains},
      {"final_version", manager.deployed_version()},
      {"nmse_sync_mean_db", num(mean_db(art.nmse_sync, 0, static_cast<std::int64_t>(y_all.size())))},
      {"sla", {{"actual_violations", art.sla_sync.actual_violations},
               {"misclassified_sync", art.sla_sync.misclassified},
               {"misclassified_frozen", cfg.compare ? json(art.sla_frozen.misclassified) : json(nullptr)}}},
      {"drifts", drifts},
  };
  if (cfg.compare) {
    art.summary["nmse_frozen_mean_db"] = num(mean_db(art.nmse_frozen, 0, static_cast<std::int64_t>(y_all.size())));
  }
  std::ofstream(cfg.out_dir / "summary.json") << art.summary.dump(2) << '\n';
  return art;
}

std::vector<SweepRow> window_sweep(std::span<const double> stream, const KswinConfig& base,
                                   std::span<const std::size_t> windows) {
  std::vector<SweepRow> rows;
  for (std::size_t w : windows) {
    KswinConfig k = base;
    k.window_size = w;
    KswinDetector det(k);
    std::size_t count = 0;
    for (double x : stream) count += det.update(x).has_value();
    rows.push_back({w, count});
  }
  return rows;
}

std::vector<SweepRow> window_sweep(const RunConfig& cfg, std::span<const std::size_t> windows) {
  cfg.validate();
  const TopologyGraph g = load_topology(cfg.topology);
  const ScenarioSchedule sched = load_schedule(cfg.schedule);
  const auto stream = simulate_schedule(g, sched, cfg, 0);
  std::vector<double> rates;
  for (const auto& e : stream.examples) rates.push_back(e.x_f[flow_feature::kTrafficRate]);
  KswinConfig base = cfg.kswin;
  base.seed = derive_seed(cfg.seed, kDetectorSeeds, 0);
  return window_sweep(rates, base, windows);
}

}  // namespace ndt
