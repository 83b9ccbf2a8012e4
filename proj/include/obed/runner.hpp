#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "obed/filter.hpp"
#include "obed/models.hpp"
#include "obed/rng.hpp"
#include "obed/utility.hpp"

namespace obed {

/// Independent (optionally left-truncated) normal prior per parameter.
struct PriorDim {
  double mean = 0.0;
  double stddev = 1.0;
  std::optional<double> lower;  // redraw until value > lower
};

struct PriorSpec {
  std::vector<PriorDim> dims;

  void sample(Rng& rng, std::span<double> out) const {
    for (std::size_t k = 0; k < dims.size(); ++k) {
      const PriorDim& p = dims[k];
      double v = rng.normal(p.mean, p.stddev);
      if (p.lower) {
        while (!(v > *p.lower)) v = rng.normal(p.mean, p.stddev);
      }
      out[k] = v;
    }
  }
};

/// Full description of a simulated measurement campaign.
template <MeasurementModel M>
struct ExperimentSpec {
  ExperimentSpec(M model_, DesignSpace designs_, NoiseSpec noise_, std::vector<double> true_params_,
                 PriorSpec prior_)
      : model(std::move(model_)),
        designs(std::move(designs_)),
        noise(noise_),
        true_params(std::move(true_params_)),
        prior(std::move(prior_)) {}

  M model;
  DesignSpace designs;
  NoiseSpec noise;
  std::vector<double> true_params;  // theta*, drives the measurement simulation
  PriorSpec prior;

  std::string name = "experiment";
  std::vector<std::string> param_names;    // defaults to p1..pD
  std::vector<std::string> setting_names;  // defaults to d1..dS
  std::size_t n_particles = 5000;
  std::size_t n_epochs = 1000;
  UtilityConfig utility{};
  FilterOptions filter{};
  std::uint64_t seed = 1;
  std::size_t entropy_trace_draws = 10000;  // 0 disables the posterior-entropy metric
};

/// Per-epoch subtask durations, microseconds. Design subtasks come from the
/// utility evaluation; summary covers the posterior metrics, which are not
/// part of the design task.
struct EpochTimings {
  std::int64_t design_model_us = 0;
  std::int64_t design_statistic_us = 0;
  std::int64_t design_entropy_us = 0;
  std::int64_t design_select_us = 0;
  std::int64_t design_total_us = 0;
  std::int64_t bayes_us = 0;
  std::int64_t resample_us = 0;
  std::int64_t summary_us = 0;
};

/// Column-oriented per-epoch trace of one run.
struct RunRecord {
  enum class Status { completed, degenerate };

  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  std::size_t param_dim = 0;
  std::size_t setting_dim = 0;
  std::size_t epochs_completed = 0;
  Status status = Status::completed;
  std::string error;

  std::vector<std::size_t> chosen_index;          // per epoch
  std::vector<double> settings;                   // epochs x setting_dim
  std::vector<double> y;                          // per epoch
  std::vector<double> post_mean;                  // epochs x D
  std::vector<double> post_std;                   // epochs x D
  std::vector<double> post_entropy;               // epochs x D (NaN when disabled)
  std::vector<std::uint8_t> resampled;            // per epoch
  std::vector<EpochTimings> timings;              // per epoch
};

struct TimingAggregate {
  // Mean over completed runs of the per-run subtask totals, microseconds.
  double model_eval_us = 0.0;
  double statistic_us = 0.0;
  double entropy_us = 0.0;
  double select_us = 0.0;
  double design_total_us = 0.0;
  double bayes_us = 0.0;
  double resample_us = 0.0;
  double summary_us = 0.0;
};

/// Per-epoch aggregates over the completed runs of a batch.
struct BatchSummary {
  std::size_t n_runs = 0;
  std::size_t n_completed = 0;
  std::size_t n_failed = 0;
  std::size_t n_epochs = 0;
  std::size_t param_dim = 0;

  // epochs x D, row-major
  std::vector<double> std_mean, std_q05, std_q95;
  std::vector<double> entropy_mean, entropy_q05, entropy_q95;
  std::vector<double> rms_error;  // sqrt(mean over runs of (post_mean - theta*)^2)

  TimingAggregate timing;
};

struct BatchResult {
  BatchSummary summary;
  std::vector<RunRecord> records;  // ordered by run index
};

namespace detail {

enum RngStream : std::uint64_t {
  kFilterStream = 1,   // prior draws + resampling
  kSamplingStream = 2, // utility parameter/noise samples
  kNoiseStream = 3,    // simulated measurement noise
  kSelectStream = 4,   // argmax ties + random design
  kMetricsStream = 5,  // posterior-entropy metric draws
};

// Linear-interpolation quantile of an unsorted sample (sorts a copy).
inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  if (m == 1) return values[0];
  const double h = p * static_cast<double>(m - 1);
  const std::size_t i = static_cast<std::size_t>(h);
  if (i + 1 >= m) return values[m - 1];
  const double frac = h - static_cast<double>(i);
  return values[i] + frac * (values[i + 1] - values[i]);
}

}  // namespace detail

template <MeasurementModel M>
struct RunState {
  ParticleFilter filter;
  Rng sample_rng, noise_rng, select_rng, metrics_rng;
  DesignWorkspace workspace;
  std::size_t epoch = 0;
};

template <MeasurementModel M>
void validate_spec(const ExperimentSpec<M>& spec) {
  if (spec.n_epochs < 1) throw std::invalid_argument("ExperimentSpec: n_epochs must be >= 1");
  if (spec.n_particles < 2) throw std::invalid_argument("ExperimentSpec: n_particles must be >= 2");
  if (spec.true_params.size() != spec.model.param_dim())
    throw std::invalid_argument("ExperimentSpec: true_params size must match the model");
  if (spec.prior.dims.size() != spec.model.param_dim())
    throw std::invalid_argument("ExperimentSpec: prior dimensions must match the model");
  if (spec.designs.setting_dim() != spec.model.setting_dim())
    throw std::invalid_argument("ExperimentSpec: design dimensions must match the model");
  if (spec.entropy_trace_draws != 0 && spec.entropy_trace_draws < 4)
    throw std::invalid_argument("ExperimentSpec: entropy_trace_draws must be 0 or >= 4");
}

template <MeasurementModel M>
RunState<M> make_run_state(const ExperimentSpec<M>& spec) {
  validate_spec(spec);
  RunState<M> st{
      ParticleFilter::from_prior(
          [&spec](Rng& r, std::span<double> out) { spec.prior.sample(r, out); },
          spec.n_particles, spec.model.param_dim(), Rng(derive_seed(spec.seed, detail::kFilterStream)),
          spec.filter),
      Rng(derive_seed(spec.seed, detail::kSamplingStream)),
      Rng(derive_seed(spec.seed, detail::kNoiseStream)),
      Rng(derive_seed(spec.seed, detail::kSelectStream)),
      Rng(derive_seed(spec.seed, detail::kMetricsStream)),
  };
  return st;
}

struct EpochResult {
  std::size_t chosen_index = 0;
  double y = 0.0;
  PosteriorSummary summary;
  bool resampled = false;
  EpochTimings timings;
};

/// One design-measure-analyze cycle: pick a setting by utility (or at
/// random), simulate a measurement at the true parameters, update the
/// filter, summarize the posterior.
template <MeasurementModel M>
EpochResult run_epoch(RunState<M>& state, const ExperimentSpec<M>& spec) {
  using clock = std::chrono::steady_clock;
  EpochResult er;

  const UtilityResult ur = evaluate_designs(spec.model, state.filter, spec.noise, spec.designs,
                                            spec.utility, state.sample_rng, state.select_rng,
                                            state.workspace);
  er.chosen_index = ur.best_index;
  er.timings.design_model_us = ur.timings.model_eval_us;
  er.timings.design_statistic_us = ur.timings.statistic_us;
  er.timings.design_entropy_us = ur.timings.entropy_us;
  er.timings.design_select_us = ur.timings.select_us;
  er.timings.design_total_us = ur.timings.total_us;

  const std::span<const double> d = spec.designs.setting(ur.best_index);
  er.y = spec.model.mean(spec.true_params, d) + state.noise_rng.normal(0.0, spec.noise.sigma_eta);

  const auto t_b0 = clock::now();
  const BayesUpdateInfo info = state.filter.bayes_update(er.y, d, spec.model, spec.noise);
  const auto t_b1 = clock::now();
  er.resampled = info.resampled;
  er.timings.resample_us = info.resample_us;
  er.timings.bayes_us = detail::us_between(t_b0, t_b1) - info.resample_us;

  const auto t_s0 = clock::now();
  if (spec.entropy_trace_draws > 0) {
    er.summary = state.filter.summarize(spec.utility.estimator, spec.entropy_trace_draws,
                                        state.metrics_rng);
  } else {
    er.summary = state.filter.summarize_moments();
    er.summary.marginal_entropy.assign(spec.model.param_dim(),
                                       std::numeric_limits<double>::quiet_NaN());
  }
  er.timings.summary_us = detail::us_between(t_s0, clock::now());

  ++state.epoch;
  return er;
}

/// Executes spec.n_epochs sequential epochs from a fresh prior-initialized
/// filter. A degenerate Bayes update aborts the run; the partial record is
/// preserved with the diagnostic.
template <MeasurementModel M>
RunRecord run(const ExperimentSpec<M>& spec) {
  validate_spec(spec);
  const std::size_t d = spec.model.param_dim();
  const std::size_t sd = spec.designs.setting_dim();

  RunRecord rec;
  rec.seed = spec.seed;
  rec.param_dim = d;
  rec.setting_dim = sd;
  rec.chosen_index.reserve(spec.n_epochs);
  rec.settings.reserve(spec.n_epochs * sd);
  rec.y.reserve(spec.n_epochs);
  rec.post_mean.reserve(spec.n_epochs * d);
  rec.post_std.reserve(spec.n_epochs * d);
  rec.post_entropy.reserve(spec.n_epochs * d);
  rec.resampled.reserve(spec.n_epochs);
  rec.timings.reserve(spec.n_epochs);

  RunState<M> state = make_run_state(spec);
  for (std::size_t e = 0; e < spec.n_epochs; ++e) {
    EpochResult er;
    try {
      er = run_epoch(state, spec);
    } catch (const degenerate_update_error& ex) {
      rec.status = RunRecord::Status::degenerate;
      rec.error = ex.what();
      break;
    }
    rec.chosen_index.push_back(er.chosen_index);
    const std::span<const double> setting = spec.designs.setting(er.chosen_index);
    rec.settings.insert(rec.settings.end(), setting.begin(), setting.end());
    rec.y.push_back(er.y);
    rec.post_mean.insert(rec.post_mean.end(), er.summary.mean.begin(), er.summary.mean.end());
    rec.post_std.insert(rec.post_std.end(), er.summary.marginal_std.begin(),
                        er.summary.marginal_std.end());
    rec.post_entropy.insert(rec.post_entropy.end(), er.summary.marginal_entropy.begin(),
                            er.summary.marginal_entropy.end());
    rec.resampled.push_back(er.resampled ? 1 : 0);
    rec.timings.push_back(er.timings);
    ++rec.epochs_completed;
  }
  return rec;
}

namespace detail {

inline BatchSummary aggregate_records(const std::vector<RunRecord>& records,
                                      std::span<const double> true_params, std::size_t n_epochs,
                                      std::size_t param_dim) {
  BatchSummary s;
  s.n_runs = records.size();
  s.n_epochs = n_epochs;
  s.param_dim = param_dim;

  std::vector<const RunRecord*> done;
  for (const RunRecord& r : records) {
    if (r.status == RunRecord::Status::completed) {
      done.push_back(&r);
    } else {
      ++s.n_failed;
    }
  }
  s.n_completed = done.size();
  if (done.empty()) return s;

  const std::size_t cells = n_epochs * param_dim;
  s.std_mean.resize(cells);
  s.std_q05.resize(cells);
  s.std_q95.resize(cells);
  s.entropy_mean.resize(cells);
  s.entropy_q05.resize(cells);
  s.entropy_q95.resize(cells);
  s.rms_error.resize(cells);

  std::vector<double> stds(done.size()), ents(done.size());
  for (std::size_t e = 0; e < n_epochs; ++e) {
    for (std::size_t k = 0; k < param_dim; ++k) {
      const std::size_t cell = e * param_dim + k;
      double std_sum = 0.0, ent_sum = 0.0, sq_err = 0.0;
      for (std::size_t r = 0; r < done.size(); ++r) {
        const double sv = done[r]->post_std[cell];
        const double ev = done[r]->post_entropy[cell];
        const double me = done[r]->post_mean[cell] - true_params[k];
        stds[r] = sv;
        ents[r] = ev;
        std_sum += sv;
        ent_sum += ev;
        sq_err += me * me;
      }
      const double m = static_cast<double>(done.size());
      s.std_mean[cell] = std_sum / m;
      s.entropy_mean[cell] = ent_sum / m;
      s.rms_error[cell] = std::sqrt(sq_err / m);
      s.std_q05[cell] = quantile(stds, 0.05);
      s.std_q95[cell] = quantile(stds, 0.95);
      s.entropy_q05[cell] = quantile(ents, 0.05);
      s.entropy_q95[cell] = quantile(ents, 0.95);
    }
  }

  for (const RunRecord* r : done) {
    for (const EpochTimings& t : r->timings) {
      s.timing.model_eval_us += static_cast<double>(t.design_model_us);
      s.timing.statistic_us += static_cast<double>(t.design_statistic_us);
      s.timing.entropy_us += static_cast<double>(t.design_entropy_us);
      s.timing.select_us += static_cast<double>(t.design_select_us);
      s.timing.design_total_us += static_cast<double>(t.design_total_us);
      s.timing.bayes_us += static_cast<double>(t.bayes_us);
      s.timing.resample_us += static_cast<double>(t.resample_us);
      s.timing.summary_us += static_cast<double>(t.summary_us);
    }
  }
  const double m = static_cast<double>(done.size());
  s.timing.model_eval_us /= m;
  s.timing.statistic_us /= m;
  s.timing.entropy_us /= m;
  s.timing.select_us /= m;
  s.timing.design_total_us /= m;
  s.timing.bayes_us /= m;
  s.timing.resample_us /= m;
  s.timing.summary_us /= m;
  return s;
}

}  // namespace detail

/// Runs n_runs independent campaigns with per-run seeds derived from
/// base_seed and aggregates the per-epoch statistics. Runs execute on up to
/// n_threads threads; results are independent of the schedule. Failed runs
/// are kept in the records, counted, and excluded from aggregates.
template <MeasurementModel M>
BatchResult run_batch(const ExperimentSpec<M>& spec, std::size_t n_runs, std::uint64_t base_seed,
                      std::size_t n_threads = 1) {
  validate_spec(spec);
  if (n_runs < 1) throw std::invalid_argument("run_batch: n_runs must be >= 1");

  BatchResult result;
  result.records.resize(n_runs);

  const std::size_t workers = std::max<std::size_t>(1, std::min(n_threads, n_runs));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= n_runs) return;
      try {
        ExperimentSpec<M> run_spec = spec;
        run_spec.seed = derive_seed(base_seed, r);
        RunRecord rec = run(run_spec);
        rec.run_index = r;
        result.records[r] = std::move(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  result.summary = detail::aggregate_records(result.records, spec.true_params, spec.n_epochs,
                                             spec.model.param_dim());
  return result;
}

}  // namespace obed
