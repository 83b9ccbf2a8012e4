#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "obed/entropy.hpp"
#include "obed/filter.hpp"
#include "obed/models.hpp"
#include "obed/rng.hpp"

namespace obed {

/// Finite ordered list of candidate setting vectors.
class DesignSpace {
 public:
  DesignSpace(std::vector<double> settings, std::size_t setting_dim)
      : settings_(std::move(settings)), setting_dim_(setting_dim) {
    if (setting_dim_ < 1 || settings_.empty() || settings_.size() % setting_dim_ != 0)
      throw std::invalid_argument("DesignSpace: bad settings shape");
    check_distinct();
  }

  /// count evenly spaced scalar settings spanning [lo, hi].
  static DesignSpace uniform_grid(double lo, double hi, std::size_t count) {
    if (count < 1) throw std::invalid_argument("DesignSpace: count must be >= 1");
    if (count > 1 && !(hi > lo)) throw std::invalid_argument("DesignSpace: need hi > lo");
    std::vector<double> v(count);
    if (count == 1) {
      v[0] = lo;
    } else {
      const double step = (hi - lo) / static_cast<double>(count - 1);
      for (std::size_t i = 0; i < count; ++i) v[i] = lo + static_cast<double>(i) * step;
    }
    return DesignSpace(std::move(v), 1);
  }

  std::size_t size() const { return settings_.size() / setting_dim_; }
  std::size_t setting_dim() const { return setting_dim_; }
  std::span<const double> setting(std::size_t i) const {
    return {settings_.data() + i * setting_dim_, setting_dim_};
  }
  std::span<const double> flat() const { return settings_; }

 private:
  void check_distinct() const {
    const std::size_t n = size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    auto row_less = [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(settings_.begin() + a * setting_dim_,
                                          settings_.begin() + (a + 1) * setting_dim_,
                                          settings_.begin() + b * setting_dim_,
                                          settings_.begin() + (b + 1) * setting_dim_);
    };
    std::sort(order.begin(), order.end(), row_less);
    for (std::size_t i = 1; i < n; ++i) {
      if (!row_less(order[i - 1], order[i]))
        throw std::invalid_argument("DesignSpace: settings must be distinct");
    }
  }

  std::vector<double> settings_;  // N_d x setting_dim, row-major
  std::size_t setting_dim_;
};

enum class UtilityAlgorithm { kld, variance, pseudo, maxmin, random };

inline const char* to_string(UtilityAlgorithm a) {
  switch (a) {
    case UtilityAlgorithm::kld: return "kld";
    case UtilityAlgorithm::variance: return "variance";
    case UtilityAlgorithm::pseudo: return "pseudo";
    case UtilityAlgorithm::maxmin: return "maxmin";
    case UtilityAlgorithm::random: return "random";
  }
  return "?";
}

struct UtilityConfig {
  UtilityAlgorithm algorithm = UtilityAlgorithm::kld;
  std::size_t n_samples = 1000;  // parameter samples per design decision; max-min typically 2
  EntropyEstimator estimator{};  // kld / pseudo only
  bool reuse_samples = true;     // one draw set shared across all candidate designs
};

/// Per-subtask design timings, microseconds.
struct UtilityTimings {
  std::int64_t model_eval_us = 0;
  std::int64_t statistic_us = 0;
  std::int64_t entropy_us = 0;
  std::int64_t select_us = 0;
  std::int64_t total_us = 0;
};

struct UtilityResult {
  std::vector<double> utilities;  // nats, one per candidate design
  std::size_t best_index = 0;
  UtilityTimings timings;
};

/// Reusable buffers for per-epoch design evaluation.
struct DesignWorkspace {
  std::vector<double> thetas;
  std::vector<double> noise_draws;
  std::vector<double> outcomes;
  std::vector<double> sorted;
  detail::RowSorter sorter;
};

/// Simulated measurement outcomes y'[i][j] for every candidate design i and
/// parameter sample j, returned row-major (n_designs x n_samples). With
/// reuse_samples one set of parameter draws (and, when add_noise, one set of
/// noise draws) is shared across all designs; otherwise fresh sets are drawn
/// per design.
template <MeasurementModel M>
void simulate_outcomes(const M& model, const ParticleFilter& filter, const NoiseSpec& noise,
                       const DesignSpace& designs, const UtilityConfig& cfg, bool add_noise,
                       Rng& rng, DesignWorkspace& ws) {
  const std::size_t ns = cfg.n_samples;
  const std::size_t nd = designs.size();
  const std::size_t pd = model.param_dim();
  if (ns < 2) throw std::invalid_argument("simulate_outcomes: n_samples must be >= 2");
  ws.outcomes.resize(nd * ns);

  if (cfg.reuse_samples) {
    ws.thetas.resize(ns * pd);
    filter.sample_parameters(ns, rng, ws.thetas);
    if (add_noise) {
      ws.noise_draws.resize(ns);
      for (double& e : ws.noise_draws) e = rng.normal(0.0, noise.sigma_eta);
    }
    eval_grid(model, ws.thetas, ns, designs.flat(), nd, ws.outcomes);
    if (add_noise) {
      for (std::size_t i = 0; i < nd; ++i) {
        double* row = ws.outcomes.data() + i * ns;
        for (std::size_t j = 0; j < ns; ++j) row[j] += ws.noise_draws[j];
      }
    }
    return;
  }

  // Independent draw sets per design (used for the reuse comparison).
  ws.thetas.resize(ns * pd);
  for (std::size_t i = 0; i < nd; ++i) {
    filter.sample_parameters(ns, rng, ws.thetas);
    double* row = ws.outcomes.data() + i * ns;
    const std::span<const double> d = designs.setting(i);
    for (std::size_t j = 0; j < ns; ++j) {
      row[j] = model.mean(std::span<const double>(ws.thetas.data() + j * pd, pd), d);
    }
    if (add_noise) {
      for (std::size_t j = 0; j < ns; ++j) row[j] += rng.normal(0.0, noise.sigma_eta);
    }
  }
}

template <MeasurementModel M>
std::vector<double> simulate_outcomes(const M& model, const ParticleFilter& filter,
                                      const NoiseSpec& noise, const DesignSpace& designs,
                                      const UtilityConfig& cfg, bool add_noise, Rng& rng) {
  DesignWorkspace ws;
  simulate_outcomes(model, filter, noise, designs, cfg, add_noise, rng, ws);
  return std::move(ws.outcomes);
}

/// U_i = H(y'_i) - H_eta from noisy outcome rows; H_eta is the closed-form
/// entropy of the known noise distribution.
inline std::vector<double> utility_kld(std::span<const double> outcomes_with_noise,
                                       std::size_t n_designs, std::size_t n_samples,
                                       const NoiseSpec& noise, const EntropyEstimator& est = {}) {
  std::vector<double> u(n_designs);
  const double h_eta = normal_entropy(noise.variance());
  std::vector<double> sorted(n_samples);
  detail::RowSorter sorter;
  for (std::size_t i = 0; i < n_designs; ++i) {
    sorter.sort_row(outcomes_with_noise.subspan(i * n_samples, n_samples), sorted);
    u[i] = spacing_entropy_sorted(sorted, est) - h_eta;
  }
  return u;
}

/// U_i = (1/2) ln(1 + Var(y'_i)/v_eta) from noise-free outcome rows;
/// population variance over the samples.
inline std::vector<double> utility_variance(std::span<const double> outcomes_noise_free,
                                            std::size_t n_designs, std::size_t n_samples,
                                            const NoiseSpec& noise) {
  std::vector<double> u(n_designs);
  const double v_eta = noise.variance();
  for (std::size_t i = 0; i < n_designs; ++i) {
    const double* row = outcomes_noise_free.data() + i * n_samples;
    double mean = 0.0;
    for (std::size_t j = 0; j < n_samples; ++j) mean += row[j];
    mean /= static_cast<double>(n_samples);
    double var = 0.0;
    for (std::size_t j = 0; j < n_samples; ++j) {
      const double dlt = row[j] - mean;
      var += dlt * dlt;
    }
    var /= static_cast<double>(n_samples);
    u[i] = 0.5 * std::log1p(var / v_eta);
  }
  return u;
}

/// U_i = (1/2) ln(1 + v_H/v_eta) with v_H = exp(2 H(y'_i)) / (2 pi e), the
/// variance a normal distribution would need to match the estimated entropy
/// of the noise-free outcome rows.
inline std::vector<double> utility_pseudo(std::span<const double> outcomes_noise_free,
                                          std::size_t n_designs, std::size_t n_samples,
                                          const NoiseSpec& noise, const EntropyEstimator& est = {}) {
  std::vector<double> u(n_designs);
  const double v_eta = noise.variance();
  std::vector<double> sorted(n_samples);
  detail::RowSorter sorter;
  for (std::size_t i = 0; i < n_designs; ++i) {
    sorter.sort_row(outcomes_noise_free.subspan(i * n_samples, n_samples), sorted);
    const double h = spacing_entropy_sorted(sorted, est);
    const double v_h = std::exp(2.0 * h) / (2.0 * std::numbers::pi * std::numbers::e);
    u[i] = 0.5 * std::log1p(v_h / v_eta);
  }
  return u;
}

/// U_i = (1/2) ln(1 + t_i^2/v_eta) with t_i the range (max - min) of the
/// noise-free outcome row.
inline std::vector<double> utility_maxmin(std::span<const double> outcomes_noise_free,
                                          std::size_t n_designs, std::size_t n_samples,
                                          const NoiseSpec& noise) {
  if (n_samples < 2) throw std::invalid_argument("utility_maxmin: need n_samples >= 2");
  std::vector<double> u(n_designs);
  const double v_eta = noise.variance();
  for (std::size_t i = 0; i < n_designs; ++i) {
    const double* row = outcomes_noise_free.data() + i * n_samples;
    double lo = row[0], hi = row[0];
    for (std::size_t j = 1; j < n_samples; ++j) {
      lo = std::min(lo, row[j]);
      hi = std::max(hi, row[j]);
    }
    const double t = hi - lo;
    u[i] = 0.5 * std::log1p(t * t / v_eta);
  }
  return u;
}

/// Index of the maximum utility; exact ties broken uniformly at random.
inline std::size_t select_design(std::span<const double> utilities, Rng& rng) {
  if (utilities.empty()) throw std::invalid_argument("select_design: empty utilities");
  double best = utilities[0];
  for (const double v : utilities) {
    if (!std::isfinite(v)) throw std::invalid_argument("select_design: utilities must be finite");
    best = std::max(best, v);
  }
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < utilities.size(); ++i) {
    if (utilities[i] == best) ties.push_back(i);
  }
  if (ties.size() == 1) return ties[0];
  return ties[rng.uniform_below(ties.size())];
}

/// Uniform draw over candidate settings, independent of data.
inline std::size_t random_design(const DesignSpace& designs, Rng& rng) {
  return static_cast<std::size_t>(rng.uniform_below(designs.size()));
}

namespace detail {

inline std::int64_t us_between(std::chrono::steady_clock::time_point a,
                               std::chrono::steady_clock::time_point b) {
  return std::chrono::duration_cast<std::chrono::microseconds>(b - a).count();
}

}  // namespace detail

/// Runs one full design decision: simulates outcomes, evaluates the
/// configured utility for every candidate design, and selects the best
/// (or a random setting for the random strategy). Utility sampling draws
/// from sample_rng; tie-breaking and random choice draw from select_rng.
template <MeasurementModel M>
UtilityResult evaluate_designs(const M& model, const ParticleFilter& filter, const NoiseSpec& noise,
                               const DesignSpace& designs, const UtilityConfig& cfg, Rng& sample_rng,
                               Rng& select_rng, DesignWorkspace& ws) {
  using clock = std::chrono::steady_clock;
  const std::size_t nd = designs.size();
  const std::size_t ns = cfg.n_samples;
  UtilityResult res;
  const auto t_start = clock::now();

  if (cfg.algorithm == UtilityAlgorithm::random) {
    res.utilities.assign(nd, 0.0);
    res.best_index = random_design(designs, select_rng);
    res.timings.total_us = detail::us_between(t_start, clock::now());
    return res;
  }

  if (ns < 2) throw std::invalid_argument("evaluate_designs: n_samples must be >= 2");
  const bool uses_entropy =
      cfg.algorithm == UtilityAlgorithm::kld || cfg.algorithm == UtilityAlgorithm::pseudo;
  if (uses_entropy && ns < 4)
    throw std::invalid_argument("evaluate_designs: entropy-based utilities need n_samples >= 4");
  const bool add_noise = cfg.algorithm == UtilityAlgorithm::kld;

  // Sampling + model evaluation. With sample reuse the model evaluation is
  // a single grid pass; without it, per-design evaluation time is folded
  // into the same bucket.
  const auto t_sim0 = clock::now();
  simulate_outcomes(model, filter, noise, designs, cfg, add_noise, sample_rng, ws);
  res.timings.model_eval_us = detail::us_between(t_sim0, clock::now());

  res.utilities.resize(nd);
  const double v_eta = noise.variance();
  if (uses_entropy) {
    const auto t_ent0 = clock::now();
    ws.sorted.resize(ns);
    ws.sorter.reset(ns);
    for (std::size_t i = 0; i < nd; ++i) {
      ws.sorter.sort_row(std::span<const double>(ws.outcomes.data() + i * ns, ns), ws.sorted);
      res.utilities[i] = spacing_entropy_sorted(ws.sorted, cfg.estimator);
    }
    res.timings.entropy_us = detail::us_between(t_ent0, clock::now());

    const auto t_stat0 = clock::now();
    if (cfg.algorithm == UtilityAlgorithm::kld) {
      const double h_eta = normal_entropy(v_eta);
      for (double& v : res.utilities) v -= h_eta;
    } else {
      for (double& v : res.utilities) {
        const double v_h = std::exp(2.0 * v) / (2.0 * std::numbers::pi * std::numbers::e);
        v = 0.5 * std::log1p(v_h / v_eta);
      }
    }
    res.timings.statistic_us = detail::us_between(t_stat0, clock::now());
  } else {
    const auto t_stat0 = clock::now();
    if (cfg.algorithm == UtilityAlgorithm::variance) {
      res.utilities = utility_variance(ws.outcomes, nd, ns, noise);
    } else {
      res.utilities = utility_maxmin(ws.outcomes, nd, ns, noise);
    }
    res.timings.statistic_us = detail::us_between(t_stat0, clock::now());
  }

  const auto t_sel0 = clock::now();
  res.best_index = select_design(res.utilities, select_rng);
  const auto t_end = clock::now();
  res.timings.select_us = detail::us_between(t_sel0, t_end);
  res.timings.total_us = detail::us_between(t_start, t_end);
  return res;
}

}  // namespace obed
