// ndt: run the drift-aware digital-twin loop on a topology and schedule.
//
//   ndt run   --topology data/topologies/synthetic8.json --compare --out out/
//   ndt sweep --topology data/topologies/synthetic8.json --windows 60,100,150,300,450

#include <CLI11.hpp>

#include <iostream>

#include "ndt/scenario.hpp"

#ifndef NDT_DATA_DIR
#define NDT_DATA_DIR "data"
#endif

namespace {

void add_common(CLI::App& app, ndt::RunConfig& cfg, std::string& topology) {
  app.add_option("--topology", topology, "topology JSON file")->check(CLI::ExistingFile);
  app.add_option("--schedule", cfg.schedule, "schedule JSON file or default:<seconds>");
  app.add_option("--seed", cfg.seed, "base random seed");
  app.add_option("--alpha", cfg.kswin.alpha, "KSWIN significance level")->check(CLI::Range(0.0, 1.0));
  app.add_option("--window-size", cfg.kswin.window_size, "KSWIN window, in samples");
  app.add_option("--stat-size", cfg.kswin.stat_size, "KSWIN recent-sample buffer, in samples");
  app.add_option("--flows-per-second", cfg.flows_per_second, "flow arrival rate");
  app.add_option("--rate-scale", cfg.traffic.rate_scale, "multiplier on schedule packet rates");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network digital twin with drift-triggered retraining"};
  app.require_subcommand(1);

  ndt::RunConfig cfg;
  std::string topology = std::string(NDT_DATA_DIR) + "/topologies/synthetic8.json";

  auto* run = app.add_subcommand("run", "run the closed loop and write reports");
  add_common(*run, cfg, topology);
  std::string sync = "on";
  run->add_option("--sync", sync, "drift-triggered retraining")->check(CLI::IsMember({"on", "off"}));
  run->add_flag("--compare", cfg.compare, "also score the never-retrained model");
  run->add_option("--epochs", cfg.train.epochs, "training epochs");
  run->add_option("--lr", cfg.train.learning_rate, "Adam learning rate");
  run->add_option("--batch-size", cfg.train.batch_size, "minimum examples per step");
  run->add_option("--pdb-beta", cfg.pdb.beta, "PDB multiple of path propagation delay");
  run->add_option("--pdb-floor", cfg.pdb.floor_s, "PDB lower bound, seconds");
  run->add_option("--replicas", cfg.corpus_replicas, "schedule realizations in the labeled database");
  run->add_option("--retrain-latency", cfg.retrain_latency, "stream samples between retrain start and deploy");
  std::string out = "ndt_out";
  run->add_option("--out", out, "output directory");

  auto* sweep = app.add_subcommand("sweep", "count detections for several window sizes");
  add_common(*sweep, cfg, topology);
  std::vector<std::size_t> windows{60, 100, 150, 300, 450};
  sweep->add_option("--windows", windows, "window sizes")->delimiter(',');

  CLI11_PARSE(app, argc, argv);
  cfg.topology = topology;

  try {
    if (*run) {
      cfg.sync = sync == "on";
      cfg.out_dir = out;
      const auto art = ndt::run_scenario(cfg);
      std::cout << art.summary.dump(2) << '\n';
    } else {
      if (windows.size() < 2) throw std::invalid_argument("sweep needs at least two window sizes");
      std::cout << "window,detections\n";
      for (const auto& row : ndt::window_sweep(cfg, windows)) std::cout << row.window << ',' << row.detections << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "ndt: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
