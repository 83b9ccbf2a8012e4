#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "obed/entropy.hpp"
#include "obed/models.hpp"
#include "obed/rng.hpp"

namespace obed {

/// Raised when a Bayes update produces no usable posterior mass (all
/// unnormalized weights vanish or turn non-finite). Indicates a
/// mis-specified model, prior, or noise level; callers abort the run.
class degenerate_update_error : public std::runtime_error {
 public:
  explicit degenerate_update_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct FilterOptions {
  double resample_threshold_ratio = 0.5;  // resample when N_eff < ratio * N_p
  double jitter_alpha = 0.01;             // post-resample jitter covariance = alpha * C
};

struct PosteriorSummary {
  std::vector<double> mean;              // D
  std::vector<double> covariance;        // D x D, row-major
  std::vector<double> marginal_std;      // D
  std::vector<double> marginal_entropy;  // D, nats; empty unless requested
};

struct BayesUpdateInfo {
  double effective_sample_size = 0.0;  // after reweighting, before any resample
  bool resampled = false;
  std::int64_t resample_us = 0;
};

namespace detail {

// Compensated (Kahan) summation; keeps weight-sum error at a few ulp
// independent of particle count.
inline double kahan_sum(std::span<const double> xs) {
  double sum = 0.0, comp = 0.0;
  for (const double x : xs) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

// In-place lower Cholesky of a d x d row-major matrix. Returns false when
// the matrix is not (numerically) positive definite.
inline bool cholesky_lower(std::span<double> a, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) {
    double pivot = a[k * d + k];
    for (std::size_t j = 0; j < k; ++j) pivot -= a[k * d + j] * a[k * d + j];
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return false;
    const double lkk = std::sqrt(pivot);
    a[k * d + k] = lkk;
    for (std::size_t i = k + 1; i < d; ++i) {
      double v = a[i * d + k];
      for (std::size_t j = 0; j < k; ++j) v -= a[i * d + j] * a[k * d + j];
      a[i * d + k] = v / lkk;
    }
    for (std::size_t j = k + 1; j < d; ++j) a[k * d + j] = 0.0;  // zero upper triangle
  }
  return true;
}

}  // namespace detail

/// Weighted particle ensemble representing the parameter distribution.
/// Updates and resampling mutate state and must be externally serialized;
/// read-only operations with a caller-supplied RNG are safe concurrently.
class ParticleFilter {
 public:
  /// Builds a filter of n_particles i.i.d. prior draws with uniform weights.
  /// The sampler fills one parameter vector per invocation.
  template <class PriorSampler>
  static ParticleFilter from_prior(PriorSampler&& prior, std::size_t n_particles, std::size_t param_dim,
                                   Rng rng, FilterOptions opts = {}) {
    check_options(opts);
    if (n_particles < 2) throw std::invalid_argument("ParticleFilter: need at least 2 particles");
    if (param_dim < 1) throw std::invalid_argument("ParticleFilter: param_dim must be >= 1");
    ParticleFilter pf;
    pf.dim_ = param_dim;
    pf.opts_ = opts;
    pf.rng_ = rng;
    pf.particles_.resize(n_particles * param_dim);
    pf.weights_.assign(n_particles, 1.0 / static_cast<double>(n_particles));
    for (std::size_t i = 0; i < n_particles; ++i) {
      prior(pf.rng_, std::span<double>(pf.particles_.data() + i * param_dim, param_dim));
    }
    return pf;
  }

  /// Rebuilds a filter from explicit particles and weights (snapshot
  /// restore, tests). Weights are validated and normalized.
  static ParticleFilter from_state(std::vector<double> particles, std::vector<double> weights,
                                   std::size_t param_dim, Rng rng, FilterOptions opts = {}) {
    check_options(opts);
    if (param_dim < 1 || particles.size() % param_dim != 0)
      throw std::invalid_argument("ParticleFilter: bad particle array shape");
    const std::size_t n = particles.size() / param_dim;
    if (n < 2 || weights.size() != n)
      throw std::invalid_argument("ParticleFilter: need >= 2 particles and matching weights");
    for (const double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w))
        throw std::invalid_argument("ParticleFilter: weights must be finite and nonnegative");
    }
    ParticleFilter pf;
    pf.dim_ = param_dim;
    pf.opts_ = opts;
    pf.rng_ = rng;
    pf.particles_ = std::move(particles);
    pf.weights_ = std::move(weights);
    pf.normalize_weights();
    return pf;
  }

  std::size_t size() const { return weights_.size(); }
  std::size_t param_dim() const { return dim_; }
  std::span<const double> particle(std::size_t i) const {
    return {particles_.data() + i * dim_, dim_};
  }
  std::span<const double> particles_flat() const { return particles_; }
  std::span<const double> weights() const { return weights_; }
  const FilterOptions& options() const { return opts_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

  /// 1 / sum(w_i^2); ranges from 1 (degenerate) to N_p (uniform).
  double effective_sample_size() const {
    std::vector<double> sq(weights_.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = weights_[i] * weights_[i];
    return 1.0 / detail::kahan_sum(sq);
  }

  /// Reweights by the Gaussian likelihood of observation y at setting d,
  /// renormalizes, and resamples when N_eff falls below the threshold.
  /// Likelihoods are handled in log space with the per-update maximum
  /// subtracted before exponentiation.
  template <MeasurementModel M>
  BayesUpdateInfo bayes_update(double y, std::span<const double> setting, const M& model,
                               const NoiseSpec& noise) {
    const std::size_t n = size();
    std::vector<double> loglik(n);
    for (std::size_t i = 0; i < n; ++i) {
      loglik[i] = gaussian_log_likelihood(y, model.mean(particle(i), setting), noise);
    }
    double max_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (weights_[i] > 0.0 && loglik[i] > max_ll) max_ll = loglik[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      weights_[i] *= std::exp(loglik[i] - max_ll);
    }
    normalize_weights();

    BayesUpdateInfo info;
    info.effective_sample_size = effective_sample_size();
    if (info.effective_sample_size < opts_.resample_threshold_ratio * static_cast<double>(n)) {
      const auto t0 = std::chrono::steady_clock::now();
      resample();
      const auto t1 = std::chrono::steady_clock::now();
      info.resampled = true;
      info.resample_us = std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count();
    }
    return info;
  }

  /// Multinomial resampling with jitter: N_p particles drawn with
  /// replacement by weight, each displaced by a zero-mean normal with
  /// covariance alpha * C, where C is the weighted covariance of the
  /// pre-resampling ensemble. Weights reset to 1/N_p.
  void resample() {
    const std::size_t n = size();
    const std::size_t d = dim_;
    std::vector<double> mean(d), cov(d * d);
    weighted_moments(mean, cov);

    // jitter factor: Cholesky of alpha*C, or per-coordinate fallback when
    // C is numerically singular
    std::vector<double> chol(cov);
    for (double& v : chol) v *= opts_.jitter_alpha;
    const bool full_cov = detail::cholesky_lower(chol, d);
    std::vector<double> diag_sigma;
    if (!full_cov) {
      diag_sigma.resize(d);
      for (std::size_t k = 0; k < d; ++k) {
        const double ckk = std::max(cov[k * d + k], 0.0);
        const double scale = std::max(std::abs(mean[k]), std::sqrt(ckk));
        const double eps = 1e-9 * scale;
        diag_sigma[k] = std::sqrt(opts_.jitter_alpha * std::max(ckk, eps * eps));
      }
    }

    std::vector<double> cum(n);
    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      running += weights_[i];
      cum[i] = running;
    }
    const double total = cum.back();

    std::vector<double> next(n * d);
    std::vector<double> z(d);
    for (std::size_t j = 0; j < n; ++j) {
      const double u = rng_.uniform() * total;
      const auto it = std::upper_bound(cum.begin(), cum.end(), u);
      const std::size_t src = std::min<std::size_t>(it - cum.begin(), n - 1);
      for (std::size_t k = 0; k < d; ++k) z[k] = rng_.normal();
      for (std::size_t k = 0; k < d; ++k) {
        double disp = 0.0;
        if (full_cov) {
          for (std::size_t l = 0; l <= k; ++l) disp += chol[k * d + l] * z[l];
        } else {
          disp = diag_sigma[k] * z[k];
        }
        next[j * d + k] = particles_[src * d + k] + disp;
      }
    }
    particles_.swap(next);
    weights_.assign(n, 1.0 / static_cast<double>(n));
  }

  /// n i.i.d. draws (with replacement, by weight) from the ensemble,
  /// written to out as n x D rows. Uses the caller's RNG.
  void sample_parameters(std::size_t n, Rng& rng, std::span<double> out) const {
    if (n < 1) throw std::invalid_argument("sample_parameters: n must be >= 1");
    if (out.size() != n * dim_) throw std::invalid_argument("sample_parameters: bad output size");
    std::vector<std::size_t> idx(n);
    sample_indices(n, rng, idx);
    for (std::size_t j = 0; j < n; ++j) {
      const double* src = particles_.data() + idx[j] * dim_;
      std::copy(src, src + dim_, out.data() + j * dim_);
    }
  }

  std::vector<double> sample_parameters(std::size_t n, Rng& rng) const {
    std::vector<double> out(n * dim_);
    sample_parameters(n, rng, out);
    return out;
  }

  /// Weighted mean, covariance and marginal standard deviations.
  PosteriorSummary summarize_moments() const {
    PosteriorSummary s;
    s.mean.resize(dim_);
    s.covariance.resize(dim_ * dim_);
    weighted_moments(s.mean, s.covariance);
    s.marginal_std.resize(dim_);
    for (std::size_t k = 0; k < dim_; ++k) {
      s.marginal_std[k] = std::sqrt(std::max(s.covariance[k * dim_ + k], 0.0));
    }
    return s;
  }

  /// Moments plus per-parameter marginal entropy, estimated with the given
  /// spacing estimator on n_draws weighted-resampled draws.
  PosteriorSummary summarize(const EntropyEstimator& est, std::size_t n_draws, Rng& rng) const {
    PosteriorSummary s = summarize_moments();
    std::vector<std::size_t> idx(n_draws);
    sample_indices(n_draws, rng, idx);
    std::vector<double> values(n_draws);
    for (std::size_t k = 0; k < dim_; ++k) {
      for (std::size_t j = 0; j < n_draws; ++j) values[j] = particles_[idx[j] * dim_ + k];
      std::sort(values.begin(), values.end());
      s.marginal_entropy.push_back(spacing_entropy_sorted(values, est));
    }
    return s;
  }

 private:
  ParticleFilter() = default;

  static void check_options(const FilterOptions& opts) {
    if (!(opts.resample_threshold_ratio > 0.0) || opts.resample_threshold_ratio > 1.0)
      throw std::invalid_argument("FilterOptions: resample_threshold_ratio must be in (0, 1]");
    if (!(opts.jitter_alpha > 0.0))
      throw std::invalid_argument("FilterOptions: jitter_alpha must be > 0");
  }

  void normalize_weights() {
    const double total = detail::kahan_sum(weights_);
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw degenerate_update_error(
          "ParticleFilter: all posterior weights vanished or turned non-finite");
    }
    for (double& w : weights_) w /= total;
  }

  void weighted_moments(std::span<double> mean, std::span<double> cov) const {
    const std::size_t n = size();
    const std::size_t d = dim_;
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weights_[i];
      for (std::size_t k = 0; k < d; ++k) mean[k] += w * particles_[i * d + k];
    }
    std::fill(cov.begin(), cov.end(), 0.0);
    std::vector<double> delta(d);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weights_[i];
      for (std::size_t k = 0; k < d; ++k) delta[k] = particles_[i * d + k] - mean[k];
      for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t l = k; l < d; ++l) cov[k * d + l] += w * delta[k] * delta[l];
      }
    }
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t l = 0; l < k; ++l) cov[k * d + l] = cov[l * d + k];
    }
  }

  void sample_indices(std::size_t n, Rng& rng, std::span<std::size_t> idx) const {
    const std::size_t np = size();
    std::vector<double> cum(np);
    double running = 0.0;
    for (std::size_t i = 0; i < np; ++i) {
      running += weights_[i];
      cum[i] = running;
    }
    const double total = cum.back();
    for (std::size_t j = 0; j < n; ++j) {
      const double u = rng.uniform() * total;
      const auto it = std::upper_bound(cum.begin(), cum.end(), u);
      idx[j] = std::min<std::size_t>(it - cum.begin(), np - 1);
    }
  }

  std::size_t dim_ = 0;
  FilterOptions opts_{};
  Rng rng_{};
  std::vector<double> particles_;  // N_p x D, row-major
  std::vector<double> weights_;    // N_p
};

}  // namespace obed
