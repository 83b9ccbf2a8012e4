#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "obed/config.hpp"
#include "obed/experiments.hpp"
#include "obed/io.hpp"
#include "obed/runner.hpp"

namespace obed {

/// Worker threads for batch execution: OBED_THREADS when set, otherwise the
/// hardware concurrency.
inline std::size_t resolve_thread_count() {
  if (const char* env = std::getenv("OBED_THREADS")) {
    const long v = std::atol(env);
    if (v < 1) throw config_error("OBED_THREADS: must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

namespace detail {

inline ResolvedConfig load_and_override(const std::string& config_path, const CliOverrides& ov) {
  ResolvedConfig rc = config_path.empty() ? default_config() : load_config_file(config_path);
  apply_overrides(rc, ov);
  return rc;
}

template <MeasurementModel M>
nlohmann::json config_echo(const ExperimentSpec<M>& spec, std::size_t n_runs) {
  return nlohmann::json{
      {"experiment", spec.name},
      {"algorithm", to_string(spec.utility.algorithm)},
      {"n_samples", spec.utility.n_samples},
      {"estimator",
       spec.utility.estimator.kind == EntropyEstimatorKind::ebrahimi ? "ebrahimi" : "vasicek"},
      {"reuse", spec.utility.reuse_samples},
      {"n_particles", spec.n_particles},
      {"resample_ratio", spec.filter.resample_threshold_ratio},
      {"alpha", spec.filter.jitter_alpha},
      {"sigma_eta", spec.noise.sigma_eta},
      {"n_designs", spec.designs.size()},
      {"n_epochs", spec.n_epochs},
      {"n_runs", n_runs},
      {"base_seed", spec.seed},
  };
}

inline std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

}  // namespace detail

/// Executes a batch per the config and writes the per-epoch CSV, summary
/// JSON and timing JSON. Exit status 0 iff all requested runs completed.
inline int cmd_run(const std::string& config_path, const CliOverrides& ov) {
  const auto t0 = std::chrono::steady_clock::now();
  ResolvedConfig rc = detail::load_and_override(config_path, ov);
  const std::size_t threads = resolve_thread_count();
  std::filesystem::create_directories(rc.output.directory);

  int status = 0;
  std::visit([&](auto& spec) {
    BatchResult batch = run_batch(spec, rc.n_runs, spec.seed, threads);
    if (rc.output.csv) {
      write_epochs_csv(detail::join_path(rc.output.directory, "epochs.csv"), batch.records,
                       spec.param_names, spec.setting_names);
    }
    if (rc.output.json) {
      write_json(detail::join_path(rc.output.directory, "summary.json"),
                 batch_summary_json(batch.summary, spec.param_names,
                                    detail::config_echo(spec, rc.n_runs)));
      nlohmann::json tj = timing_json(batch.summary.timing);
      tj["meta"] = detail::config_echo(spec, rc.n_runs);
      write_json(detail::join_path(rc.output.directory, "timing.json"), tj);
    }
    if (ov.snapshot) {
      // final filter state of run 0, re-derived (runs are deterministic)
      ExperimentSpec<std::decay_t<decltype(spec.model)>> snap_spec = spec;
      snap_spec.seed = derive_seed(spec.seed, 0);
      RunState<std::decay_t<decltype(spec.model)>> state = make_run_state(snap_spec);
      for (std::size_t e = 0; e < snap_spec.n_epochs; ++e) run_epoch(state, snap_spec);
      write_json(detail::join_path(rc.output.directory, "filter_snapshot.json"),
                 filter_snapshot_json(state.filter));
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << spec.name << ' ' << to_string(spec.utility.algorithm) << " runs=" << rc.n_runs
              << " epochs=" << spec.n_epochs << " | final mean std:";
    for (std::size_t k = 0; k < batch.summary.param_dim; ++k) {
      const std::size_t cell = (batch.summary.n_epochs - 1) * batch.summary.param_dim + k;
      std::cout << ' ' << spec.param_names[k] << '='
                << (batch.summary.std_mean.empty() ? std::string("n/a")
                                                   : format_double(batch.summary.std_mean[cell]));
    }
    std::cout << " | failed=" << batch.summary.n_failed << " | wall=" << format_double(wall)
              << "s\n";
    if (batch.summary.n_failed > 0) status = 1;
  }, rc.experiment);
  return status;
}

/// Runs identical batches for each named algorithm with a shared base seed
/// (matched measurement-noise streams) and writes the comparison tables.
inline int cmd_compare(const std::string& config_path, const std::vector<std::string>& algorithms,
                       const CliOverrides& ov) {
  if (algorithms.size() < 2)
    throw config_error("compare: need at least two algorithms (e.g. kld variance maxmin@2)");
  ResolvedConfig rc = detail::load_and_override(config_path, ov);
  const std::size_t threads = resolve_thread_count();
  std::filesystem::create_directories(rc.output.directory);

  int status = 0;
  std::visit([&](auto& base_spec) {
    using Spec = std::decay_t<decltype(base_spec)>;
    std::vector<std::pair<std::string, BatchResult>> results;
    for (const std::string& text : algorithms) {
      const AlgorithmSpec alg = parse_algorithm_spec(text);
      Spec spec = base_spec;
      spec.utility.algorithm = alg.algorithm;
      if (alg.n_samples) {
        spec.utility.n_samples = *alg.n_samples;
      } else if (!rc.n_samples_explicit) {
        spec.utility.n_samples = alg.algorithm == UtilityAlgorithm::maxmin ? 2 : 1000;
      }
      const auto t0 = std::chrono::steady_clock::now();
      BatchResult batch = run_batch(spec, rc.n_runs, spec.seed, threads);
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << spec.name << ' ' << alg.label << " runs=" << rc.n_runs
                << " | design total us/run=" << format_double(batch.summary.timing.design_total_us)
                << " | failed=" << batch.summary.n_failed << " | wall=" << format_double(wall)
                << "s\n";
      if (batch.summary.n_failed > 0) status = 1;
      results.emplace_back(alg.label, std::move(batch));
    }

    std::vector<std::pair<std::string, const BatchSummary*>> summaries;
    std::vector<std::pair<std::string, const std::vector<RunRecord>*>> traces;
    for (const auto& [label, batch] : results) {
      summaries.emplace_back(label, &batch.summary);
      traces.emplace_back(label, &batch.records);
    }
    write_compare_summary_csv(detail::join_path(rc.output.directory, "compare_summary.csv"),
                              summaries, base_spec.param_names);
    write_compare_timing_csv(detail::join_path(rc.output.directory, "compare_timing.csv"),
                             summaries);
    write_compare_settings_csv(detail::join_path(rc.output.directory, "compare_settings.csv"),
                               traces, base_spec.setting_names);
  }, rc.experiment);
  return status;
}

/// Sample-reuse demonstration: simulated outcome scatters and KLD utility
/// curves with shared vs fresh draws, written as CSV tables.
inline int cmd_fig1(const std::string& config_path, const CliOverrides& ov) {
  ResolvedConfig rc = detail::load_and_override(config_path, ov);
  std::filesystem::create_directories(rc.output.directory);

  std::uint64_t seed = 1;
  std::visit([&](const auto& spec) { seed = spec.seed; }, rc.experiment);
  std::visit([&](const auto& spec) { rc.reuse_demo.estimator = spec.utility.estimator; },
             rc.experiment);

  Rng rng(derive_seed(seed, detail::kSamplingStream));
  const ReuseDemoResult demo = reuse_demo(rc.reuse_demo, rng);

  const std::size_t nd = demo.designs.size();
  const std::size_t ns = rc.reuse_demo.n_samples;
  {
    std::ofstream out = detail::open_output(detail::join_path(rc.output.directory,
                                                              "fig1_outcomes.csv"));
    out << "mode,x,sample,y\n";
    for (std::size_t i = 0; i < nd; ++i) {
      for (std::size_t j = 0; j < ns; ++j) {
        out << "reuse," << format_double(demo.designs[i]) << ',' << j << ','
            << format_double(demo.outcomes_reuse[i * ns + j]) << '\n';
      }
    }
    for (std::size_t i = 0; i < nd; ++i) {
      for (std::size_t j = 0; j < ns; ++j) {
        out << "fresh," << format_double(demo.designs[i]) << ',' << j << ','
            << format_double(demo.outcomes_fresh[i * ns + j]) << '\n';
      }
    }
  }
  {
    std::ofstream out = detail::open_output(detail::join_path(rc.output.directory,
                                                              "fig1_utilities.csv"));
    out << "mode,x,utility\n";
    for (std::size_t i = 0; i < nd; ++i) {
      out << "reuse," << format_double(demo.designs[i]) << ','
          << format_double(demo.utility_reuse[i]) << '\n';
    }
    for (std::size_t i = 0; i < nd; ++i) {
      out << "fresh," << format_double(demo.designs[i]) << ','
          << format_double(demo.utility_fresh[i]) << '\n';
    }
  }

  const auto argmax_of = [&](const std::vector<double>& u) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < u.size(); ++i) {
      if (u[i] > u[best]) best = i;
    }
    return demo.designs[best];
  };
  std::cout << "fig1 n_samples=" << ns << " n_designs=" << nd
            << " | masd reuse=" << format_double(mean_abs_successive_diff(demo.utility_reuse))
            << " fresh=" << format_double(mean_abs_successive_diff(demo.utility_fresh))
            << " | argmax reuse=" << format_double(argmax_of(demo.utility_reuse))
            << " fresh=" << format_double(argmax_of(demo.utility_fresh)) << '\n';
  return 0;
}

}  // namespace obed
