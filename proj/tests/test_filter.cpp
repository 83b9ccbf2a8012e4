#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "obed/filter.hpp"
#include "obed/io.hpp"
#include "obed/models.hpp"
#include "obed/rng.hpp"

namespace {

using namespace obed;

// f(theta, d) = theta[0]; the conjugate-Gaussian toy model
struct LinearModel {
  std::size_t param_dim() const { return 1; }
  std::size_t setting_dim() const { return 1; }
  double mean(std::span<const double> theta, std::span<const double>) const { return theta[0]; }
};

// f == constant: flat likelihood
struct ConstantModel {
  std::size_t param_dim() const { return 1; }
  std::size_t setting_dim() const { return 1; }
  double mean(std::span<const double>, std::span<const double>) const { return 42.0; }
};

ParticleFilter normal_prior_filter(std::size_t n, double mean, double sd, std::uint64_t seed,
                                   FilterOptions opts = {}) {
  return ParticleFilter::from_prior(
      [mean, sd](Rng& r, std::span<double> out) { out[0] = r.normal(mean, sd); }, n, 1, Rng(seed),
      opts);
}

double weight_sum_error(const ParticleFilter& pf) {
  double sum = 0.0;
  for (const double w : pf.weights()) sum += w;
  return std::abs(sum - 1.0);
}

TEST(FromPrior, UniformWeightsAndFullEss) {
  const auto pf = normal_prior_filter(1000, 0.0, 1.0, 31);
  for (const double w : pf.weights()) EXPECT_DOUBLE_EQ(w, 0.001);
  EXPECT_NEAR(pf.effective_sample_size(), 1000.0, 1e-9);
  EXPECT_LT(weight_sum_error(pf), 1e-12);
}

TEST(FromPrior, DegeneratePriorReplicatesPoint) {
  const auto pf = ParticleFilter::from_prior(
      [](Rng&, std::span<double> out) { out[0] = 7.5; }, 64, 1, Rng(32));
  for (std::size_t i = 0; i < pf.size(); ++i) EXPECT_EQ(pf.particle(i)[0], 7.5);
}

TEST(FromPrior, SampleMeanMatchesPriorAtLargeN) {
  // standard error 0.5/sqrt(1e5) ~ 0.00158; bound is 3x with margin
  const auto pf = normal_prior_filter(100000, 3.0, 0.5, 33);
  double mean = 0.0;
  for (std::size_t i = 0; i < pf.size(); ++i) mean += pf.particle(i)[0];
  mean /= static_cast<double>(pf.size());
  EXPECT_NEAR(mean, 3.0, 0.005);
}

TEST(FromPrior, RejectsTinyEnsembles) {
  EXPECT_THROW(normal_prior_filter(1, 0.0, 1.0, 34), std::invalid_argument);
  EXPECT_THROW(normal_prior_filter(0, 0.0, 1.0, 34), std::invalid_argument);
}

TEST(BayesUpdate, FlatLikelihoodIsNoOp) {
  auto pf = normal_prior_filter(500, 0.0, 1.0, 35);
  const std::vector<double> before(pf.weights().begin(), pf.weights().end());
  const std::vector<double> d{0.0};
  pf.bayes_update(42.0, d, ConstantModel{}, NoiseSpec(1.0));
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(pf.weights()[i], before[i], 1e-15);
  EXPECT_LT(weight_sum_error(pf), 1e-12);
}

TEST(BayesUpdate, TwoParticleLikelihoodRatio) {
  // residuals 0 and sqrt(2 ln 3) give likelihood ratio 3:1 -> weights 3/4, 1/4
  const double b = 1.4823038073675112;
  auto pf = ParticleFilter::from_state({0.0, b}, {0.5, 0.5}, 1, Rng(36));
  const std::vector<double> d{0.0};
  pf.bayes_update(0.0, d, LinearModel{}, NoiseSpec(1.0));
  EXPECT_NEAR(pf.weights()[0], 0.75, 1e-12);
  EXPECT_NEAR(pf.weights()[1], 0.25, 1e-12);
}

TEST(BayesUpdate, LorentzianWeightRatioMatchesScalarArithmetic) {
  const Lorentzian model(50000.0, -1000.0, 0.1);
  // keep the threshold low so the 2-particle filter does not resample
  FilterOptions opts;
  opts.resample_threshold_ratio = 1e-6;
  auto pf = ParticleFilter::from_state({2.6, 3.5}, {0.5, 0.5}, 1, Rng(37), opts);
  const double y = 49000.0;
  const std::vector<double> d{2.6};
  pf.bayes_update(y, d, model, NoiseSpec(1000.0));

  const double r26 = y - model.eval(2.6, 2.6);
  const double r35 = y - model.eval(3.5, 2.6);
  const double expected_ratio = std::exp((r35 * r35 - r26 * r26) / (2.0 * 1000.0 * 1000.0));
  EXPECT_NEAR(pf.weights()[0] / pf.weights()[1], expected_ratio, 1e-9 * expected_ratio);
}

TEST(BayesUpdate, ExtremeResidualsDoNotUnderflowBestParticle) {
  // residual scale far beyond exp range: max-subtraction keeps the closest
  // particle's weight finite
  auto pf = ParticleFilter::from_state({0.0, 1000.0}, {0.5, 0.5}, 1, Rng(38),
                                       {1e-6, 0.01});
  const std::vector<double> d{0.0};
  pf.bayes_update(0.0, d, LinearModel{}, NoiseSpec(1e-3));
  EXPECT_NEAR(pf.weights()[0], 1.0, 1e-12);
  EXPECT_LT(weight_sum_error(pf), 1e-12);
}

TEST(BayesUpdate, NonFiniteObservationIsDegenerate) {
  auto pf = normal_prior_filter(100, 0.0, 1.0, 39);
  const std::vector<double> d{0.0};
  EXPECT_THROW(
      pf.bayes_update(std::numeric_limits<double>::infinity(), d, LinearModel{}, NoiseSpec(1.0)),
      degenerate_update_error);
}

TEST(BayesUpdate, TriggersResampleOnWeightCollapse) {
  auto pf = ParticleFilter::from_state({0.0, 50.0, 60.0, 70.0},
                                       {0.25, 0.25, 0.25, 0.25}, 1, Rng(40));
  const std::vector<double> d{0.0};
  const BayesUpdateInfo info = pf.bayes_update(0.0, d, LinearModel{}, NoiseSpec(1.0));
  EXPECT_TRUE(info.resampled);
  EXPECT_LT(info.effective_sample_size, 1.0 + 1e-9);
  for (const double w : pf.weights()) EXPECT_EQ(w, 0.25);
}

TEST(EffectiveSampleSize, KnownWeightPatterns) {
  const auto uniform = normal_prior_filter(250, 0.0, 1.0, 41);
  EXPECT_NEAR(uniform.effective_sample_size(), 250.0, 1e-9);

  const auto point = ParticleFilter::from_state({0.0, 1.0, 2.0, 3.0}, {1.0, 0.0, 0.0, 0.0}, 1,
                                                Rng(42));
  EXPECT_NEAR(point.effective_sample_size(), 1.0, 1e-12);

  const auto half = ParticleFilter::from_state({0.0, 1.0, 2.0, 3.0}, {0.5, 0.5, 0.0, 0.0}, 1,
                                               Rng(43));
  EXPECT_NEAR(half.effective_sample_size(), 2.0, 1e-12);
}

TEST(EffectiveSampleSize, StrictlyDecreasesUnderNonUniformReweighting) {
  Rng gen(44);
  for (int t = 0; t < 25; ++t) {
    FilterOptions opts;
    opts.resample_threshold_ratio = 1e-6;
    auto pf = normal_prior_filter(200, 0.0, 1.0, 4500 + t, opts);
    const double n_eff_before = pf.effective_sample_size();
    const std::vector<double> d{0.0};
    pf.bayes_update(gen.normal(0.0, 0.5), d, LinearModel{}, NoiseSpec(1.0));
    EXPECT_LT(pf.effective_sample_size(), n_eff_before);
  }
}

TEST(Resample, DegenerateEnsembleReplicatesWithNearZeroJitter) {
  auto pf = ParticleFilter::from_state({4.0, 4.0, 4.0, 4.0}, {1.0, 0.0, 0.0, 0.0}, 1, Rng(46));
  pf.resample();
  for (std::size_t i = 0; i < pf.size(); ++i) EXPECT_NEAR(pf.particle(i)[0], 4.0, 1e-6);
  for (const double w : pf.weights()) EXPECT_EQ(w, 0.25);
  EXPECT_NEAR(pf.effective_sample_size(), 4.0, 1e-9);
}

TEST(Resample, PreservesMeanAndInflatesCovarianceByAlpha) {
  // 2-D correlated ensemble with nonuniform weights; over R independent
  // resamplings the mean is preserved and the covariance gains the jitter
  // factor (1 + alpha)
  const std::size_t n = 2000, R = 400;
  Rng gen(47);
  std::vector<double> particles(n * 2), weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = gen.normal(), b = gen.normal();
    particles[i * 2] = 1.0 + a;
    particles[i * 2 + 1] = -2.0 + 0.6 * a + 0.8 * b;
    weights[i] = 0.2 + gen.uniform();
  }
  const auto base = ParticleFilter::from_state(particles, weights, 2, Rng(48));
  const PosteriorSummary pre = base.summarize_moments();

  std::vector<double> mean_acc(2, 0.0), cov_acc(4, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    ParticleFilter copy = base;
    copy.rng() = Rng(4900 + r);
    copy.resample();
    const PosteriorSummary s = copy.summarize_moments();
    for (int k = 0; k < 2; ++k) mean_acc[k] += s.mean[k];
    for (int k = 0; k < 4; ++k) cov_acc[k] += s.covariance[k];
  }
  for (double& v : mean_acc) v /= static_cast<double>(R);
  for (double& v : cov_acc) v /= static_cast<double>(R);

  const double rn = std::sqrt(static_cast<double>(R * n));
  for (int k = 0; k < 2; ++k) {
    const double se = pre.marginal_std[k] / rn;
    EXPECT_NEAR(mean_acc[k], pre.mean[k], 3.0 * se);
  }
  const double alpha = base.options().jitter_alpha;
  const double scale = std::sqrt(pre.covariance[0] * pre.covariance[3]);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(cov_acc[k], (1.0 + alpha) * pre.covariance[k], 0.008 * scale);
  }
}

TEST(Resample, UniformWeightsPreserveMeanWithinMonteCarloError) {
  const auto base = normal_prior_filter(5000, 2.0, 1.0, 50);
  const PosteriorSummary pre = base.summarize_moments();
  const std::size_t R = 100;
  double mean_acc = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    ParticleFilter copy = base;
    copy.rng() = Rng(5100 + r);
    copy.resample();
    mean_acc += copy.summarize_moments().mean[0];
  }
  mean_acc /= static_cast<double>(R);
  const double se = pre.marginal_std[0] / std::sqrt(static_cast<double>(R * base.size()));
  EXPECT_NEAR(mean_acc, pre.mean[0], 3.0 * se);
}

TEST(SampleParameters, PointMassAndMembership) {
  const auto point = ParticleFilter::from_state({1.0, 2.0, 3.0}, {0.0, 1.0, 0.0}, 1, Rng(51));
  Rng rng(52);
  const auto draws = point.sample_parameters(50, rng);
  for (const double v : draws) EXPECT_EQ(v, 2.0);

  const auto pf = ParticleFilter::from_state({1.0, 2.0, 3.0}, {0.3, 0.3, 0.4}, 1, Rng(53));
  const auto two = pf.sample_parameters(2, rng);
  for (const double v : two) EXPECT_TRUE(v == 1.0 || v == 2.0 || v == 3.0);
}

TEST(SampleParameters, UniformWeightsPassFrequencyChiSquare) {
  // 100 particles, 10^4 draws: chi^2(99) at the 1% level is 134.642
  const std::size_t np = 100, draws_per_trial = 100, trials = 100;
  std::vector<double> particles(np);
  for (std::size_t i = 0; i < np; ++i) particles[i] = static_cast<double>(i);
  const auto pf = ParticleFilter::from_state(particles, std::vector<double>(np, 1.0 / np), 1,
                                             Rng(54));
  Rng rng(55);
  std::vector<std::size_t> counts(np, 0);
  std::vector<double> out(draws_per_trial);
  for (std::size_t t = 0; t < trials; ++t) {
    pf.sample_parameters(draws_per_trial, rng, out);
    for (const double v : out) ++counts[static_cast<std::size_t>(v)];
  }
  const double expected = static_cast<double>(draws_per_trial * trials) / np;
  double chi2 = 0.0;
  for (const std::size_t c : counts) {
    const double d = static_cast<double>(c) - expected;
    chi2 += d * d / expected;
  }
  EXPECT_LT(chi2, 134.641617);
}

TEST(Summarize, TwoPointAndDegenerateMoments) {
  const auto two = ParticleFilter::from_state({0.0, 2.0}, {0.5, 0.5}, 1, Rng(56));
  const PosteriorSummary s = two.summarize_moments();
  EXPECT_DOUBLE_EQ(s.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(s.covariance[0], 1.0);
  EXPECT_DOUBLE_EQ(s.marginal_std[0], 1.0);

  const auto flat = ParticleFilter::from_state({5.0, 5.0, 5.0}, {0.2, 0.5, 0.3}, 1, Rng(57));
  EXPECT_DOUBLE_EQ(flat.summarize_moments().covariance[0], 0.0);
}

TEST(Summarize, MarginalEntropyMatchesNormalOracle) {
  const auto pf = normal_prior_filter(100000, 0.0, 1.0, 58);
  Rng rng(59);
  const PosteriorSummary s = pf.summarize(EntropyEstimator{}, 100000, rng);
  EXPECT_NEAR(s.marginal_entropy[0], 1.4189385332046727, 0.02);
}

TEST(Summarize, CovarianceSymmetricPsd) {
  Rng gen(60);
  std::vector<double> particles(300 * 2), weights(300);
  for (std::size_t i = 0; i < 300; ++i) {
    particles[i * 2] = gen.normal();
    particles[i * 2 + 1] = gen.normal() * 2.0 + 0.5 * particles[i * 2];
    weights[i] = gen.uniform() + 0.01;
  }
  const auto pf = ParticleFilter::from_state(particles, weights, 2, Rng(61));
  const PosteriorSummary s = pf.summarize_moments();
  EXPECT_EQ(s.covariance[1], s.covariance[2]);
  EXPECT_GE(s.covariance[0], 0.0);
  EXPECT_GE(s.covariance[3], 0.0);
  const double det = s.covariance[0] * s.covariance[3] - s.covariance[1] * s.covariance[2];
  EXPECT_GE(det, -1e-12);
  EXPECT_DOUBLE_EQ(s.marginal_std[0], std::sqrt(s.covariance[0]));
}

TEST(ConjugateGaussian, PosteriorMatchesClosedForm) {
  // prior N(0,1), four observations of theta with unit noise:
  // posterior N(sum(y)/5, 1/5)
  FilterOptions opts;
  opts.resample_threshold_ratio = 1e-9;
  auto pf = normal_prior_filter(100000, 0.0, 1.0, 62, opts);
  const std::vector<double> data{0.5, -0.2, 0.3, 0.1};
  const std::vector<double> d{0.0};
  for (const double y : data) {
    pf.bayes_update(y, d, LinearModel{}, NoiseSpec(1.0));
    EXPECT_LT(weight_sum_error(pf), 1e-12);
  }
  const double post_mean = 0.14, post_var = 0.2;
  const double n_eff = pf.effective_sample_size();
  const PosteriorSummary s = pf.summarize_moments();
  EXPECT_NEAR(s.mean[0], post_mean, 3.0 * std::sqrt(post_var / n_eff));
  EXPECT_NEAR(s.covariance[0], post_var, 3.0 * post_var * std::sqrt(2.0 / n_eff));
}

TEST(Determinism, FixedSeedGivesIdenticalTrajectory) {
  auto run_once = [&]() {
    auto pf = normal_prior_filter(400, 0.0, 1.0, 63);
    const std::vector<double> d{0.0};
    for (int e = 0; e < 20; ++e) {
      pf.bayes_update(0.1 * e - 1.0, d, LinearModel{}, NoiseSpec(0.7));
    }
    return std::vector<double>(pf.particles_flat().begin(), pf.particles_flat().end());
  };
  EXPECT_EQ(run_once(), run_once());
}

TEST(Snapshot, RoundTripContinuesIdentically) {
  auto pf = normal_prior_filter(300, 1.0, 2.0, 64);
  const std::vector<double> d{0.0};
  pf.bayes_update(0.5, d, LinearModel{}, NoiseSpec(1.0));

  const nlohmann::json snap = filter_snapshot_json(pf);
  ParticleFilter restored = filter_from_snapshot(snap);
  ASSERT_EQ(restored.size(), pf.size());
  for (std::size_t i = 0; i < pf.size(); ++i) EXPECT_EQ(restored.particle(i)[0], pf.particle(i)[0]);

  pf.resample();
  restored.resample();
  for (std::size_t i = 0; i < pf.size(); ++i) EXPECT_EQ(restored.particle(i)[0], pf.particle(i)[0]);
}

TEST(FromState, ValidatesInputs) {
  EXPECT_THROW(ParticleFilter::from_state({1.0, 2.0}, {0.5, -0.5}, 1, Rng(65)),
               std::invalid_argument);
  EXPECT_THROW(ParticleFilter::from_state({1.0, 2.0}, {0.5}, 1, Rng(65)), std::invalid_argument);
  EXPECT_THROW(ParticleFilter::from_state({1.0, 2.0, 3.0}, {0.5, 0.5}, 2, Rng(65)),
               std::invalid_argument);
  // all-zero weights cannot normalize
  EXPECT_THROW(ParticleFilter::from_state({1.0, 2.0}, {0.0, 0.0}, 1, Rng(65)),
               degenerate_update_error);
}

TEST(FilterOptions, Validated) {
  EXPECT_THROW(normal_prior_filter(10, 0.0, 1.0, 66, {0.0, 0.01}), std::invalid_argument);
  EXPECT_THROW(normal_prior_filter(10, 0.0, 1.0, 66, {1.5, 0.01}), std::invalid_argument);
  EXPECT_THROW(normal_prior_filter(10, 0.0, 1.0, 66, {0.5, 0.0}), std::invalid_argument);
}

}  // namespace
