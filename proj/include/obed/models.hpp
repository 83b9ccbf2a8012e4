#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace obed {

/// Measurement-noise description: zero-mean normal with known standard
/// deviation, constant over parameters and settings.
struct NoiseSpec {
  double sigma_eta = 1.0;

  NoiseSpec() = default;
  explicit NoiseSpec(double sigma) : sigma_eta(sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("NoiseSpec: sigma_eta must be > 0");
  }

  double variance() const { return sigma_eta * sigma_eta; }
};

/// A measurement model maps (parameter vector, setting vector) to the mean
/// measurement value. Implementations must be pure: identical inputs always
/// produce identical outputs.
template <class M>
concept MeasurementModel = requires(const M& m, std::span<const double> theta, std::span<const double> d) {
  { m.param_dim() } -> std::convertible_to<std::size_t>;
  { m.setting_dim() } -> std::convertible_to<std::size_t>;
  { m.mean(theta, d) } -> std::convertible_to<double>;
};

// ---------------------------------------------------------------------------
// Lorentzian peak
// ---------------------------------------------------------------------------

struct LorentzianParams {
  double background = 0.0;  // b
  double amplitude = 1.0;   // a (may be negative for a dip)
  double half_width = 1.0;  // > 0
  double center = 0.0;      // the unknown parameter in the peak experiment
};

/// b + a / (((x - x0)/w)^2 + 1). Total for half_width > 0.
inline double lorentzian_eval(const LorentzianParams& p, double x) {
  const double u = (x - p.center) / p.half_width;
  return p.background + p.amplitude / (u * u + 1.0);
}

/// Lower bound on the standard deviation of an unbiased estimate of the
/// Lorentzian center after n measurements at the optimal setting.
inline double lorentzian_cramer_rao(const LorentzianParams& p, const NoiseSpec& noise, std::size_t n) {
  if (p.amplitude == 0.0) throw std::invalid_argument("lorentzian_cramer_rao: amplitude must be nonzero");
  if (n < 1) throw std::invalid_argument("lorentzian_cramer_rao: n must be >= 1");
  return 8.0 / (3.0 * std::sqrt(3.0)) * (p.half_width / std::abs(p.amplitude)) * noise.sigma_eta /
         std::sqrt(static_cast<double>(n));
}

/// Peak-center estimation model: theta = {center}, d = {x}; the remaining
/// Lorentzian constants are fixed.
class Lorentzian {
 public:
  Lorentzian(double background, double amplitude, double half_width)
      : background_(background), amplitude_(amplitude), half_width_(half_width) {
    if (!(half_width > 0.0)) throw std::invalid_argument("Lorentzian: half_width must be > 0");
  }

  std::size_t param_dim() const { return 1; }
  std::size_t setting_dim() const { return 1; }

  double mean(std::span<const double> theta, std::span<const double> d) const {
    return eval(theta[0], d[0]);
  }

  double eval(double center, double x) const {
    const double u = (x - center) / half_width_;
    return background_ + amplitude_ / (u * u + 1.0);
  }

  /// Row kernel used by eval_grid: values of f(theta, x_i) for one theta
  /// over all settings.
  void eval_settings_row(std::span<const double> theta, std::span<const double> settings,
                         std::span<double> out) const {
    const double c = theta[0];
    for (std::size_t i = 0; i < settings.size(); ++i) {
      const double u = (settings[i] - c) / half_width_;
      out[i] = background_ + amplitude_ / (u * u + 1.0);
    }
  }

  double background() const { return background_; }
  double amplitude() const { return amplitude_; }
  double half_width() const { return half_width_; }

 private:
  double background_;
  double amplitude_;
  double half_width_;
};

// ---------------------------------------------------------------------------
// Decaying sinusoid (Ramsey)
// ---------------------------------------------------------------------------

struct RamseyParams {
  double background = 0.0;      // h
  double contrast = 1.0;        // c
  double frequency = 1.0;       // omega0, rad per time unit
  double dephasing_time = 1.0;  // T2 > 0
};

/// h + c * sin(omega0 * tau) * exp(-(tau/T2)^2). Total for dephasing_time > 0.
inline double ramsey_eval(const RamseyParams& p, double tau) {
  const double u = tau / p.dephasing_time;
  return p.background + p.contrast * std::sin(p.frequency * tau) * std::exp(-u * u);
}

/// Lower bound on the standard deviation of the frequency estimate after n
/// repeated measurements at the optimal delay.
inline double ramsey_cramer_rao(const RamseyParams& p, const NoiseSpec& noise, std::size_t n) {
  if (p.contrast == 0.0) throw std::invalid_argument("ramsey_cramer_rao: contrast must be nonzero");
  if (!(p.dephasing_time > 0.0)) throw std::invalid_argument("ramsey_cramer_rao: dephasing_time must be > 0");
  if (n < 1) throw std::invalid_argument("ramsey_cramer_rao: n must be >= 1");
  return std::sqrt(2.0 * std::numbers::e) / (std::abs(p.contrast) * p.dephasing_time) * noise.sigma_eta /
         std::sqrt(static_cast<double>(n));
}

/// Decaying-sinusoid model with all four parameters unknown:
/// theta = {background, contrast, frequency, dephasing_time}, d = {tau}.
class DecayingSinusoid {
 public:
  std::size_t param_dim() const { return 4; }
  std::size_t setting_dim() const { return 1; }

  double mean(std::span<const double> theta, std::span<const double> d) const {
    return ramsey_eval({theta[0], theta[1], theta[2], theta[3]}, d[0]);
  }

  /// Row kernel for eval_grid. On a uniformly spaced setting grid the sine
  /// and Gaussian factors are advanced by two-term recurrences, re-anchored
  /// on exact evaluations every 64 steps; this stays within ~1e-12 of direct
  /// evaluation while avoiding a transcendental call per entry. Non-uniform
  /// grids fall back to direct evaluation.
  void eval_settings_row(std::span<const double> theta, std::span<const double> settings,
                         std::span<double> out) const {
    const double h = theta[0], c = theta[1], w = theta[2], t2 = theta[3];
    const std::size_t n = settings.size();
    const double dt = uniform_step(settings);
    if (dt == 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        const double tau = settings[i];
        const double u = tau / t2;
        out[i] = h + c * std::sin(w * tau) * std::exp(-u * u);
      }
      return;
    }
    const double cd = std::cos(w * dt), sd = std::sin(w * dt);
    const double inv_t2sq = 1.0 / (t2 * t2);
    const double ratio = std::exp(-2.0 * dt * dt * inv_t2sq);
    double s = 0.0, co = 0.0, e = 0.0, g = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if ((i & 63u) == 0) {
        const double tau = settings[i];
        s = std::sin(w * tau);
        co = std::cos(w * tau);
        e = std::exp(-tau * tau * inv_t2sq);
        g = std::exp(-(2.0 * tau * dt + dt * dt) * inv_t2sq);
      }
      out[i] = h + c * s * e;
      const double s_next = s * cd + co * sd;
      co = co * cd - s * sd;
      s = s_next;
      e *= g;
      g *= ratio;
      // short dephasing times drive the damping factor through the
      // denormal range; once negligible, pin it to zero
      if (e < 1e-300) {
        e = 0.0;
        g = 0.0;
      }
    }
  }

 private:
  // Returns the common spacing if the grid is uniform (to ~1e-9 of its
  // span), else 0.
  static double uniform_step(std::span<const double> settings) {
    const std::size_t n = settings.size();
    if (n < 3) return 0.0;
    const double dt = (settings[n - 1] - settings[0]) / static_cast<double>(n - 1);
    if (dt == 0.0) return 0.0;
    const double tol = 1e-9 * std::abs(settings[n - 1] - settings[0]);
    for (std::size_t i = 1; i < n; ++i) {
      if (std::abs(settings[i] - settings[i - 1] - dt) > tol) return 0.0;
    }
    return dt;
  }
};

// ---------------------------------------------------------------------------
// Gaussian likelihood
// ---------------------------------------------------------------------------

/// log N(y; mean, sigma^2) = -(y-mean)^2/(2 sigma^2) - log(sqrt(2 pi) sigma).
/// Kept in log space; callers exponentiate after subtracting a maximum.
inline double gaussian_log_likelihood(double y, double mean, const NoiseSpec& noise) {
  const double r = y - mean;
  return -(r * r) / (2.0 * noise.variance()) - std::log(std::sqrt(2.0 * std::numbers::pi) * noise.sigma_eta);
}

// ---------------------------------------------------------------------------
// Grid evaluation
// ---------------------------------------------------------------------------

template <class M>
concept RowEvaluableModel = MeasurementModel<M> && requires(const M& m, std::span<const double> theta,
                                                            std::span<const double> settings,
                                                            std::span<double> out) {
  { m.eval_settings_row(theta, settings, out) };
};

/// Evaluates the model for every (setting, parameter-sample) pair:
/// out[i * n_samples + j] = f(theta_j, d_i). This is the shared hot loop of
/// all utility computations.
template <MeasurementModel M>
void eval_grid(const M& model, std::span<const double> thetas, std::size_t n_samples,
               std::span<const double> settings, std::size_t n_designs, std::span<double> out) {
  const std::size_t pd = model.param_dim();
  const std::size_t sd = model.setting_dim();
  if (n_samples < 1 || n_designs < 1) throw std::invalid_argument("eval_grid: empty grid");
  if (thetas.size() != n_samples * pd || settings.size() != n_designs * sd ||
      out.size() != n_designs * n_samples)
    throw std::invalid_argument("eval_grid: size mismatch");

  if constexpr (RowEvaluableModel<M>) {
    if (sd == 1) {
      // The row kernel produces design-contiguous values for one sample;
      // `out` wants sample-contiguous rows per design. Evaluate a block of
      // samples, then transpose the block so stores stay sequential.
      constexpr std::size_t kBlock = 64;
      std::vector<double> rows(kBlock * n_designs);
      for (std::size_t j0 = 0; j0 < n_samples; j0 += kBlock) {
        const std::size_t jb = std::min(kBlock, n_samples - j0);
        for (std::size_t j = 0; j < jb; ++j) {
          model.eval_settings_row(thetas.subspan((j0 + j) * pd, pd), settings,
                                  std::span<double>(rows.data() + j * n_designs, n_designs));
        }
        for (std::size_t i = 0; i < n_designs; ++i) {
          double* dst = out.data() + i * n_samples + j0;
          for (std::size_t j = 0; j < jb; ++j) dst[j] = rows[j * n_designs + i];
        }
      }
      return;
    }
  }
  for (std::size_t i = 0; i < n_designs; ++i) {
    const std::span<const double> d = settings.subspan(i * sd, sd);
    double* dst = out.data() + i * n_samples;
    for (std::size_t j = 0; j < n_samples; ++j) {
      dst[j] = model.mean(thetas.subspan(j * pd, pd), d);
    }
  }
}

}  // namespace obed
