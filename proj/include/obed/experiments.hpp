#pragma once

#include <cstdint>
#include <vector>

#include "obed/models.hpp"
#include "obed/runner.hpp"
#include "obed/utility.hpp"

namespace obed {

/// Lorentzian dip preset: single unknown center, constants
/// b = 50000, a = -1000, half-width 0.1, noise sigma 1000, true center 2.6,
/// prior Normal(3.0, 0.5), 200 candidate settings spanning [1.5, 4.5].
inline ExperimentSpec<Lorentzian> lorentzian_experiment() {
  ExperimentSpec<Lorentzian> spec(Lorentzian(50000.0, -1000.0, 0.1),
                                  DesignSpace::uniform_grid(1.5, 4.5, 200), NoiseSpec(1000.0),
                                  {2.6}, PriorSpec{{{3.0, 0.5, {}}}});
  spec.name = "lorentzian";
  spec.param_names = {"x0"};
  spec.setting_names = {"x"};
  spec.n_particles = 5000;
  spec.n_epochs = 1000;
  return spec;
}

/// Decaying-sinusoid (Ramsey) preset: four unknown parameters with true
/// values h = 0.8, c = 0.13, omega0 = 9.4, T2 = 10, noise sigma 0.13,
/// delay grid 0.1..20 in steps of 0.01 (1991 settings). Prior: independent
/// normals h(0.8, 0.2), c(0.13, 0.05), omega0(9.5, 1.0), T2(10, 3) with T2
/// truncated to > 0.5.
inline ExperimentSpec<DecayingSinusoid> ramsey_experiment() {
  PriorSpec prior;
  prior.dims = {{0.8, 0.2, {}}, {0.13, 0.05, {}}, {9.5, 1.0, {}}, {10.0, 3.0, 0.5}};
  ExperimentSpec<DecayingSinusoid> spec(DecayingSinusoid{},
                                        DesignSpace::uniform_grid(0.1, 20.0, 1991),
                                        NoiseSpec(0.13), {0.8, 0.13, 9.4, 10.0}, std::move(prior));
  spec.name = "ramsey";
  spec.param_names = {"h", "c", "omega0", "t2"};
  spec.setting_names = {"tau"};
  spec.n_particles = 5000;
  spec.n_epochs = 1000;
  return spec;
}

/// Configuration of the sample-reuse demonstration: a unit Lorentzian peak
/// y' = 1/(((x - x0)/0.1)^2 + 1) + eta with x0 ~ Normal(2.6, 0.1) and
/// eta ~ Normal(0, 0.1), evaluated with the KLD utility over 200 settings
/// spanning [2, 4].
struct ReuseDemoConfig {
  double center_mean = 2.6;
  double center_std = 0.1;
  double sigma_eta = 0.1;
  std::size_t n_samples = 100;
  double grid_lo = 2.0;
  double grid_hi = 4.0;
  std::size_t n_designs = 200;
  EntropyEstimator estimator{};
};

struct ReuseDemoResult {
  std::vector<double> designs;            // N_d scalar settings
  std::vector<double> outcomes_reuse;     // N_d x N_s
  std::vector<double> outcomes_fresh;     // N_d x N_s
  std::vector<double> utility_reuse;      // N_d
  std::vector<double> utility_fresh;      // N_d
};

/// Simulates predicted-outcome scatters and KLD utility curves with one
/// shared draw set (reuse) and with fresh draws per design. Parameter
/// samples come straight from the prior.
inline ReuseDemoResult reuse_demo(const ReuseDemoConfig& cfg, Rng& rng) {
  if (cfg.n_samples < 4) throw std::invalid_argument("reuse_demo: n_samples must be >= 4");
  if (cfg.n_designs < 2) throw std::invalid_argument("reuse_demo: n_designs must be >= 2");
  const NoiseSpec noise(cfg.sigma_eta);
  const Lorentzian model(0.0, 1.0, 0.1);
  const DesignSpace designs = DesignSpace::uniform_grid(cfg.grid_lo, cfg.grid_hi, cfg.n_designs);
  const std::size_t nd = designs.size();
  const std::size_t ns = cfg.n_samples;

  ReuseDemoResult res;
  res.designs.assign(designs.flat().begin(), designs.flat().end());
  res.outcomes_reuse.resize(nd * ns);
  res.outcomes_fresh.resize(nd * ns);

  // shared draw set, applied to every design
  std::vector<double> centers(ns), eta(ns);
  for (double& c : centers) c = rng.normal(cfg.center_mean, cfg.center_std);
  for (double& e : eta) e = rng.normal(0.0, cfg.sigma_eta);
  for (std::size_t i = 0; i < nd; ++i) {
    const double x = res.designs[i];
    double* row = res.outcomes_reuse.data() + i * ns;
    for (std::size_t j = 0; j < ns; ++j) row[j] = model.eval(centers[j], x) + eta[j];
  }

  // fresh draw sets per design
  for (std::size_t i = 0; i < nd; ++i) {
    const double x = res.designs[i];
    double* row = res.outcomes_fresh.data() + i * ns;
    for (std::size_t j = 0; j < ns; ++j) {
      row[j] = model.eval(rng.normal(cfg.center_mean, cfg.center_std), x) +
               rng.normal(0.0, cfg.sigma_eta);
    }
  }

  res.utility_reuse = utility_kld(res.outcomes_reuse, nd, ns, noise, cfg.estimator);
  res.utility_fresh = utility_kld(res.outcomes_fresh, nd, ns, noise, cfg.estimator);
  return res;
}

/// Mean absolute successive difference of a curve; the smoothness metric of
/// the reuse comparison.
inline double mean_abs_successive_diff(std::span<const double> curve) {
  if (curve.size() < 2) throw std::invalid_argument("mean_abs_successive_diff: need >= 2 points");
  double sum = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) sum += std::abs(curve[i] - curve[i - 1]);
  return sum / static_cast<double>(curve.size() - 1);
}

}  // namespace obed
