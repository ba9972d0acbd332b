#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mlmf/harness.hpp"

namespace {

std::vector<double> parse_theta_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed Stackelberg equilibrium seeking for networked "
               "multi-leader multi-follower games"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed_override = 0;

  auto* cmd_run = app.add_subcommand("run", "Run the seeking algorithm end to end");
  cmd_run->add_option("--config", config_path, "Path to the JSON run config")->required();
  cmd_run->add_option("--seed", seed_override, "Seed override");
  cmd_run->add_option("--out", out_dir, "Output directory override");

  auto* cmd_cmp = app.add_subcommand("compare-schedules",
                                     "Run diminishing vs constant step schedules");
  cmd_cmp->add_option("--config", config_path, "Path to the JSON run config")->required();

  std::string theta_csv = "1e1,1e2,1e3";
  auto* cmd_sweep = app.add_subcommand("barrier-sweep",
                                       "Cost-gap sweep over barrier parameters");
  cmd_sweep->add_option("--config", config_path, "Path to the JSON run config")->required();
  cmd_sweep->add_option("--theta", theta_csv, "Comma-separated barrier parameters");

  auto* cmd_theory = app.add_subcommand("theory", "Print the theory report only");
  cmd_theory->add_option("--config", config_path, "Path to the JSON run config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    mlmf::RunConfig config = mlmf::load_config(config_path);
    if (cmd_run->parsed()) {
      if (cmd_run->count("--seed") > 0) config.seed = seed_override;
      if (!out_dir.empty()) config.output_dir = out_dir;
      const mlmf::RunResult result = mlmf::run(config);
      mlmf::write_outputs(config, result);
      std::printf("run: %d outer iterations%s -> %s\n", result.iterations_run,
                  result.early_stopped ? " (early stop)" : "", config.output_dir.c_str());
      const auto& rows = result.trajectory.rows;
      if (!rows.empty()) {
        const auto& last = rows.back();
        std::printf("  final ||Psi_hat|| = %.6g", last.psi_norm);
        if (!std::isnan(last.rel_x_err)) std::printf(", rel_x_err = %.6g", last.rel_x_err);
        std::printf("\n");
      }
      for (const auto& w : result.theory.warnings) std::printf("  note: %s\n", w.c_str());
      return 0;
    }
    if (cmd_cmp->parsed()) {
      const mlmf::ScheduleComparison cmp = mlmf::compare_schedules(config);
      namespace fs = std::filesystem;
      fs::create_directories(config.output_dir);
      {
        std::ofstream f(fs::path(config.output_dir) / "trajectory_diminishing.csv");
        f << cmp.diminishing.to_csv(config.record_timing);
      }
      {
        std::ofstream f(fs::path(config.output_dir) / "trajectory_constant.csv");
        f << cmp.constant.to_csv(config.record_timing);
      }
      auto show = [](const char* name, int k1, int k2) {
        std::printf("  %-12s reach 1e-1: %s, reach 1e-2: %s\n", name,
                    k1 >= 0 ? std::to_string(k1).c_str() : "not reached",
                    k2 >= 0 ? std::to_string(k2).c_str() : "not reached");
      };
      std::printf("compare-schedules (%s metric):\n",
                  config.oracle ? "relative Psi_hat error" : "normalized ||Psi_hat||");
      show("diminishing", cmp.iters_to_threshold_diminishing_1e1,
           cmp.iters_to_threshold_diminishing_1e2);
      show("constant", cmp.iters_to_threshold_constant_1e1,
           cmp.iters_to_threshold_constant_1e2);
      return 0;
    }
    if (cmd_sweep->parsed()) {
      const auto thetas = parse_theta_list(theta_csv);
      const auto table = mlmf::barrier_gap_sweep(config, thetas);
      std::printf("%14s %16s %16s %14s %14s\n", "theta", "cost_gap", "lemma_bound",
                  "worst_br_gap", "br_gap_bound");
      for (const auto& row : table)
        std::printf("%14.6g %16.8g %16.8g %14.8g %14.8g\n", row.theta, row.cost_gap,
                    row.lemma_bound, row.worst_br_gap, row.br_gap_bound);
      return 0;
    }
    if (cmd_theory->parsed()) {
      mlmf::RunConfig probe = config;
      probe.max_outer_iterations = 1;
      probe.oracle = false;
      const mlmf::RunResult result = mlmf::run(probe);
      std::cout << mlmf::theory_to_json(result.theory).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
