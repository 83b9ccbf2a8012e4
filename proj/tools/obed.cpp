// Command-line front end for simulated adaptive measurement campaigns.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "obed/cli.hpp"
#include "obed/config.hpp"

namespace {

void add_common_options(CLI::App* cmd, std::string& config_path, obed::CliOverrides& ov) {
  cmd->add_option("--config", config_path, "JSON config file");
  cmd->add_option_function<std::string>(
      "--preset", [&ov](const std::string& v) { ov.preset = v; },
      "Experiment preset: lorentzian|ramsey");
  cmd->add_option_function<std::string>(
      "--utility", [&ov](const std::string& v) { ov.utility = v; },
      "Utility algorithm: kld|variance|pseudo|maxmin|random, optionally name@N_s");
  cmd->add_option_function<std::size_t>(
      "--n-samples", [&ov](std::size_t v) { ov.n_samples = v; },
      "Parameter samples per design decision");
  cmd->add_option_function<std::size_t>(
      "--n-epochs", [&ov](std::size_t v) { ov.n_epochs = v; }, "Epochs per run");
  cmd->add_option_function<std::size_t>(
      "--n-runs", [&ov](std::size_t v) { ov.n_runs = v; }, "Independent runs per batch");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&ov](std::uint64_t v) { ov.seed = v; }, "Base seed");
  cmd->add_option_function<std::string>(
      "--out", [&ov](const std::string& v) { ov.out_dir = v; }, "Output directory");
  cmd->add_flag("--no-reuse", ov.no_reuse, "Draw fresh samples per candidate design");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential Bayesian experiment-design simulator"};
  app.require_subcommand(1);

  std::string config_path;
  obed::CliOverrides ov;
  std::vector<std::string> algorithms;

  CLI::App* run = app.add_subcommand("run", "Run a batch of simulated measurement campaigns");
  add_common_options(run, config_path, ov);
  run->add_flag("--snapshot", ov.snapshot, "Write the final particle-filter state of run 0");

  CLI::App* compare =
      app.add_subcommand("compare", "Run matched batches for several utility algorithms");
  add_common_options(compare, config_path, ov);
  compare->add_option("--algorithms", algorithms,
                      "Algorithms to compare, e.g. kld variance pseudo maxmin@2 random")
      ->expected(-1);

  CLI::App* fig1 = app.add_subcommand("fig1", "Sample-reuse demonstration tables");
  add_common_options(fig1, config_path, ov);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return obed::cmd_run(config_path, ov);
    if (compare->parsed()) return obed::cmd_compare(config_path, algorithms, ov);
    if (fig1->parsed()) return obed::cmd_fig1(config_path, ov);
  } catch (const obed::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
