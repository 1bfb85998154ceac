// facts-sim: experiment harness CLI. Subcommands: accuracy, tail, throughput,
// oracle, plot.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "facts/sim.hpp"

using namespace facts;

int main(int argc, char** argv) {
  CLI::App app{"FACTS experiment harness"};
  app.require_subcommand(1);

  // accuracy
  sim::ExperimentConfig acfg;
  std::string out_csv;
  auto* accuracy = app.add_subcommand(
      "accuracy", "complaints-to-audit mean/std against background complaints");
  accuracy->add_option("--n", acfg.n, "per-epoch complaint cap")->capture_default_str();
  accuracy->add_option("--t", acfg.thresholds, "audit thresholds (repeatable)")
      ->capture_default_str();
  accuracy->add_option("--lambda", acfg.lambda_stat, "statistical parameter")
      ->capture_default_str();
  accuracy
      ->add_option("--background", acfg.background_levels,
                   "background complaint counts (default 0,n/4,n/2,3n/4,n-2t)")
      ->delimiter(',');
  accuracy->add_option("--trials", acfg.trials, "trials per point")->capture_default_str();
  accuracy->add_option("--seed", acfg.seed, "RNG seed")->capture_default_str();
  accuracy->add_option("--out", out_csv, "CSV output path (default stdout)");

  // tail
  std::uint32_t tail_t = 100, tail_lambda = 10, tail_trials = 1000;
  std::uint64_t tail_n = 100000, tail_background = 0, tail_seed = 1;
  auto* tail = app.add_subcommand("tail", "empirical false-positive/negative rates at the "
                                          "tail-bound boundary counts");
  tail->add_option("--t", tail_t, "audit threshold")->capture_default_str();
  tail->add_option("--lambda", tail_lambda, "statistical parameter")->capture_default_str();
  tail->add_option("--trials", tail_trials, "trials per arm")->capture_default_str();
  tail->add_option("--n", tail_n, "per-epoch complaint cap")->capture_default_str();
  tail->add_option("--background", tail_background, "background complaints")
      ->capture_default_str();
  tail->add_option("--seed", tail_seed, "RNG seed")->capture_default_str();

  // throughput
  sim::ThroughputConfig tcfg;
  std::uint32_t latency_ms = 0;
  auto* throughput =
      app.add_subcommand("throughput", "drive concurrent complain flows against a live server");
  throughput->add_option("--clients", tcfg.clients, "concurrent clients")->capture_default_str();
  throughput->add_option("--complaints", tcfg.complaints_per_client, "complaints per client")
      ->capture_default_str();
  throughput->add_option("--latency-ms", latency_ms, "injected one-way latency")
      ->capture_default_str();
  throughput
      ->add_option("--bandwidth-bps", tcfg.bandwidth_bits_per_sec,
                   "token-bucket bandwidth in bits/s (0 = unlimited)")
      ->capture_default_str();
  throughput->add_option("--n", tcfg.n, "per-epoch complaint cap")->capture_default_str();
  throughput->add_option("--t", tcfg.t, "audit threshold")->capture_default_str();
  throughput->add_option("--quota", tcfg.quota_limit, "per-user quota L")->capture_default_str();

  // oracle
  std::uint64_t os = 2000, om = 200, oruns = 100000, oseed = 1;
  std::uint32_t ou = 100, ov = 40, ot = 10;
  auto* oracle = app.add_subcommand(
      "oracle", "Monte Carlo tipping-point oracle (explicit increments), vs the exact value");
  oracle->add_option("--s", os, "table bits")->capture_default_str();
  oracle->add_option("--u", ou, "user set size")->capture_default_str();
  oracle->add_option("--v", ov, "item set size")->capture_default_str();
  oracle->add_option("--m", om, "background set bits")->capture_default_str();
  oracle->add_option("--t", ot, "increments on the item")->capture_default_str();
  oracle->add_option("--runs", oruns, "Monte Carlo runs")->capture_default_str();
  oracle->add_option("--seed", oseed, "RNG seed")->capture_default_str();

  // plot
  std::string plot_in, plot_out = ".";
  auto* plot = app.add_subcommand("plot", "emit gnuplot data and script from an accuracy CSV");
  plot->add_option("--in", plot_in, "accuracy CSV path")->required();
  plot->add_option("--out", plot_out, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (accuracy->parsed()) {
      const auto rows = sim::run_accuracy(acfg);
      if (out_csv.empty()) {
        sim::write_accuracy_csv(std::cout, rows);
      } else {
        std::ofstream out(out_csv);
        if (!out) throw std::runtime_error("cannot write " + out_csv);
        sim::write_accuracy_csv(out, rows);
        std::cerr << "wrote " << rows.size() << " rows to " << out_csv << "\n";
      }
      return 0;
    }
    if (tail->parsed()) {
      const auto res =
          sim::run_tail_check(tail_t, tail_lambda, tail_trials, tail_n, tail_background,
                              tail_seed);
      const TailThresholds th = tail_thresholds(tail_t, tail_lambda);
      if (!th.fp_meaningful())
        std::cerr << "warning: t - 2.1*sqrt(lambda*t) <= 0; the false-positive arm is "
                     "degenerate for this lambda\n";
      std::printf("t=%u lambda=%u trials=%u background=%llu\n", res.t, res.lambda_stat,
                  res.trials, (unsigned long long)tail_background);
      std::printf("fp arm: %llu complaints -> empirical rate %.4f (bound 2^-%u = %.4f)\n",
                  (unsigned long long)res.fp_arm_complaints, res.fp_rate, tail_lambda,
                  std::pow(2.0, -double(tail_lambda)));
      std::printf("fn arm: %llu complaints -> empirical rate %.4f (bound 2^-%u = %.4f)\n",
                  (unsigned long long)res.fn_arm_complaints, res.fn_rate, tail_lambda,
                  std::pow(2.0, -double(tail_lambda)));
      return 0;
    }
    if (throughput->parsed()) {
      tcfg.one_way_latency = std::chrono::milliseconds(latency_ms);
      const auto rep = sim::run_throughput(tcfg);
      std::printf("accepted %llu/%llu complaints in %.2f s -> %.1f complaints/s\n",
                  (unsigned long long)rep.accepted, (unsigned long long)rep.attempted,
                  rep.elapsed_s, rep.complaints_per_sec);
      std::printf("phases: snapshot %.2f ms, index round trip %.2f ms (snapshot payload %llu "
                  "bytes)\n",
                  rep.mean_snapshot_ms, rep.mean_index_rtt_ms,
                  (unsigned long long)rep.snapshot_bytes);
      std::printf("origination exchange: %.2f ms\n", rep.originate_ms);
      if (rep.model_complaints_per_sec > 0)
        std::printf("two-round model: %.2f complaints/s (measured/model = %.2f)\n",
                    rep.model_complaints_per_sec,
                    rep.complaints_per_sec / rep.model_complaints_per_sec);
      return 0;
    }
    if (oracle->parsed()) {
      const double mc = sim::mc_tipping_oracle(os, ou, ov, om, ot, oruns, oseed);
      const TippingTables tb = build_tipping_tables(os, ou, ov, om, ot);
      std::printf("oracle mean %.6f (round %lld), exact %.6f (tau %lld)\n", mc,
                  (long long)std::llround(mc), tb.tau_exact(),
                  (long long)std::llround(tb.tau_exact()));
      return std::llround(mc) == std::llround(tb.tau_exact()) ? 0 : 1;
    }
    if (plot->parsed()) {
      std::ifstream in(plot_in);
      if (!in) throw std::runtime_error("cannot read " + plot_in);
      const auto rows = sim::parse_accuracy_csv(in);
      sim::emit_plots(rows, plot_out);
      std::cerr << "wrote plot data and script to " << plot_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
