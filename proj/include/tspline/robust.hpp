#ifndef TSPLINE_ROBUST_HPP
#define TSPLINE_ROBUST_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "tspline/bivariate.hpp"
#include "tspline/distributions.hpp"
#include "tspline/error.hpp"
#include "tspline/optimize.hpp"
#include "tspline/smoothing.hpp"

namespace tspline {

/// Residual window [lo, hi] kept by the ranged expected MSE and the noise
/// second moment over it.
struct RangedCutoff {
  double lo;
  double hi;
  double sigma2;
};

inline RangedCutoff ranged_cutoff(const NoiseModel& noise, double beta) {
  if (!(beta >= 0.0 && beta < 0.5)) throw invalid_input("ranged cutoff: beta must lie in [0, 0.5)");
  if (beta == 0.0) {
    const double inf = std::numeric_limits<double>::infinity();
    return {-inf, inf, noise.variance()};
  }
  const double lo = noise.quantile(0.5 * beta);
  const double hi = noise.quantile(1.0 - 0.5 * beta);
  return {lo, hi, noise.variance_in_range(lo, hi)};
}

/// Distance cutoff for bivariate residuals and the per-axis second moment
/// (half the distance second moment) below it.
struct DistanceCutoff {
  double radius;
  double sigma2;
};

inline DistanceCutoff distance_cutoff(const NoiseModel& axis, double beta) {
  if (!(beta >= 0.0 && beta < 0.5)) throw invalid_input("distance cutoff: beta must lie in [0, 0.5)");
  if (beta == 0.0) return {std::numeric_limits<double>::infinity(), axis.variance()};
  const auto dist = distance_error_distribution(axis);
  const double r = dist.quantile(1.0 - beta);
  return {r, 0.5 * dist.second_moment_below(r)};
}

namespace detail {

/// Expected MSE of the subsystem S_RR acting on x_R.
inline double ranged_subsystem_mse(const SmoothingSpline& fit, std::span<const std::uint8_t> keep,
                                   double sigma2) {
  const std::size_t n = fit.n();
  std::vector<double> xr(n, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) {
      xr[i] = fit.values()[i];
      ++count;
    }
  }
  if (count == 0) throw degenerate_fit("ranged expected mse: every observation was discarded");
  const auto sx = fit.apply(xr);
  const auto diag = fit.smoothing_diagonal();
  double rss = 0.0, trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    rss += (sx[i] - xr[i]) * (sx[i] - xr[i]);
    trace += diag[i];
  }
  const double m = static_cast<double>(count);
  return rss / m + 2.0 * sigma2 / m * trace - sigma2;
}

}  // namespace detail

/// Expected MSE restricted to observations whose residuals fall inside the
/// central 1 - beta probability range of `noise`.
inline double ranged_expected_mse(const SmoothingSpline& fit, double beta, const NoiseModel& noise) {
  const auto c = ranged_cutoff(noise, beta);
  std::vector<std::uint8_t> keep(fit.n());
  for (std::size_t i = 0; i < fit.n(); ++i) {
    const double e = fit.residuals()[i];
    keep[i] = e >= c.lo && e <= c.hi;
  }
  return detail::ranged_subsystem_mse(fit, keep, c.sigma2);
}

inline double ranged_expected_mse(const SmoothingSpline& fit, double beta) {
  return ranged_expected_mse(fit, beta, fit.noise());
}

/// Bivariate form: the cutoff applies to the residual distance, and the
/// value is the sum over both directions.
inline double ranged_expected_mse(const BivariateFit& fit, double beta, const NoiseModel& noise) {
  const auto c = distance_cutoff(noise, beta);
  const auto d = fit.residual_distances();
  std::vector<std::uint8_t> keep(fit.size());
  for (std::size_t i = 0; i < fit.size(); ++i) keep[i] = d[i] <= c.radius;
  return detail::ranged_subsystem_mse(fit.fit_x(), keep, c.sigma2) +
         detail::ranged_subsystem_mse(fit.fit_y(), keep, c.sigma2);
}

inline double ranged_expected_mse(const BivariateFit& fit, double beta) {
  return ranged_expected_mse(fit, beta, fit.noise());
}

/// Residuals pooled over both directions.
inline std::vector<double> pooled_residuals(const BivariateFit& fit) {
  std::vector<double> r(fit.residuals_x().begin(), fit.residuals_x().end());
  r.insert(r.end(), fit.residuals_y().begin(), fit.residuals_y().end());
  return r;
}

inline std::vector<double> pooled_residuals(const SmoothingSpline& fit) {
  return {fit.residuals().begin(), fit.residuals().end()};
}

struct FullTension {
  double lambda = 0.0;
  double ad_score = std::numeric_limits<double>::infinity();
  bool ok = true;  // false when the score was flat or unbracketed
};

/// Largest tension consistent with `model`: minimizes the partial
/// Anderson-Darling statistic of the residuals over the model's interquartile
/// range. Leaves the fit at
/// the result. Works for SmoothingSpline and BivariateFit.
template <class Fit>
FullTension full_tension(Fit& fit, const NoiseModel& model) {
  const double q1 = model.quantile(0.25), q3 = model.quantile(0.75);
  auto score = [&](const Fit& f) {
    const auto r = pooled_residuals(f);
    return anderson_darling_partial(std::span<const double>(r), model, q1, q3);
  };
  const double start = fit.lambda();
  if (!std::isfinite(score(fit))) return {start, std::numeric_limits<double>::infinity(), false};
  fit.minimize(score);
  const auto& m = fit.last_minimization();
  FullTension out{fit.lambda(), m ? m->value : score(fit), m ? m->bracketed : true};
  if (!std::isfinite(out.ad_score)) {
    fit.settle_lambda(start);
    out = {start, out.ad_score, false};
  }
  return out;
}

inline constexpr double outlier_nu = 3.0;

struct OutlierEstimate {
  double alpha = 0.0;
  double sigma_o = 0.0;
  double ad_score = std::numeric_limits<double>::infinity();
  bool no_outliers = false;
  int grid_index = 0;

  NoiseModel outlier_model() const { return NoiseModel::student_t(sigma_o, outlier_nu); }
};

/// The 100 log-spaced outlier fractions scanned, 0.01 .. 0.5.
inline std::vector<double> outlier_alpha_grid(std::size_t count = 100) {
  std::vector<double> g(count);
  const double a = std::log(0.01), b = std::log(0.5);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return g;
}

/// Upper 5% point of A^2 for a fully specified null distribution.
inline constexpr double anderson_darling_critical_95 = 2.492;

/// Mixture (1 - alpha) p_noise + alpha t(sigma_o, 3) that best explains the
/// residuals: sigma_o from the total variance for each alpha, alpha by the
/// smallest Anderson-Darling statistic. When p_noise alone already passes the
/// 5% A^2 test, or no alpha yields sigma_o above the noise scale, the result
/// is the grid minimum at the floor with `no_outliers` set.
inline OutlierEstimate estimate_outlier_distribution(std::span<const double> residuals,
                                                     const NoiseModel& noise) {
  if (residuals.size() < 8) throw insufficient_data("outlier estimate: need at least 8 residuals");
  double mean = 0.0;
  for (double r : residuals) mean += r;
  mean /= static_cast<double>(residuals.size());
  double var_total = 0.0;
  for (double r : residuals) var_total += (r - mean) * (r - mean);
  var_total /= static_cast<double>(residuals.size() - 1);

  std::vector<double> noise_cdf(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) noise_cdf[i] = noise.cdf(residuals[i]);

  const double var_noise = noise.variance();
  const double floor = noise.scale();
  const auto grid = outlier_alpha_grid();
  OutlierEstimate best;
  bool best_clamped = false;
  std::vector<double> mixed(residuals.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double alpha = grid[g];
    const double s2 = (var_total - (1.0 - alpha) * var_noise) / (3.0 * alpha);
    const bool clamped = !(s2 > floor * floor);
    const double sigma_o = clamped ? floor : std::sqrt(s2);
    const auto outlier = NoiseModel::student_t(sigma_o, outlier_nu);
    for (std::size_t i = 0; i < residuals.size(); ++i) {
      mixed[i] = (1.0 - alpha) * noise_cdf[i] + alpha * outlier.cdf(residuals[i]);
    }
    const double ad = anderson_darling_from_cdf(mixed);
    if (ad < best.ad_score) {
      best = {alpha, sigma_o, ad, false, static_cast<int>(g)};
      best_clamped = clamped;
    }
  }
  const double ad_noise = anderson_darling_from_cdf(noise_cdf);
  if (best_clamped || best.grid_index == 0 || ad_noise < anderson_darling_critical_95) {
    const auto outlier = NoiseModel::student_t(floor, outlier_nu);
    for (std::size_t i = 0; i < residuals.size(); ++i) {
      mixed[i] = (1.0 - grid[0]) * noise_cdf[i] + grid[0] * outlier.cdf(residuals[i]);
    }
    return {grid[0], floor, anderson_darling_from_cdf(mixed), true, 0};
  }
  return best;
}

struct RobustResult {
  OutlierEstimate outliers;
  double full_tension_lambda = 0.0;
  double lambda = 0.0;
  std::vector<std::uint8_t> flags;  // model probability below the reporting threshold
  int iterations = 0;
  bool converged = true;
};

namespace detail {

inline std::vector<std::uint8_t> outlier_flags(const SmoothingSpline& fit, const NoiseModel& noise,
                                               double probability) {
  const double cut = noise.quantile(1.0 - 0.5 * probability);
  std::vector<std::uint8_t> f(fit.n());
  for (std::size_t i = 0; i < fit.n(); ++i) f[i] = std::abs(fit.residuals()[i]) > cut;
  return f;
}

inline std::vector<std::uint8_t> outlier_flags(const BivariateFit& fit, const NoiseModel& noise,
                                               double probability) {
  const double cut = distance_error_distribution(noise).quantile(1.0 - probability);
  const auto d = fit.residual_distances();
  std::vector<std::uint8_t> f(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) f[i] = d[i] > cut;
  return f;
}

}  // namespace detail

/// Outlier-robust smoothing: full tension under p_noise, iterative
/// estimation of the outlier distribution with refined full tension, then
/// minimization of the ranged expected MSE from that tension. Points whose
/// residual has model probability below `flag_probability` are flagged.
template <class Fit>
RobustResult robust_smooth(Fit& fit, const NoiseModel& noise, double beta = 0.01,
                           double flag_probability = 1e-4, int max_iterations = 10) {
  RobustResult out;
  fit.set_noise(noise);
  const auto ft = full_tension(fit, noise);
  out.full_tension_lambda = ft.lambda;
  auto residuals = pooled_residuals(fit);
  OutlierEstimate best = estimate_outlier_distribution(residuals, noise);
  double best_lambda = fit.lambda();
  out.converged = false;
  for (int it = 0; it < max_iterations; ++it) {
    const auto robust = NoiseModel::mixture(best.alpha, noise, best.outlier_model());
    fit.set_noise(robust);
    full_tension(fit, robust);
    residuals = pooled_residuals(fit);
    const auto next = estimate_outlier_distribution(residuals, noise);
    ++out.iterations;
    if (!(next.ad_score < best.ad_score)) {
      out.converged = true;
      break;
    }
    const bool settled = std::abs(next.grid_index - best.grid_index) < 1;
    best = next;
    best_lambda = fit.lambda();
    if (settled) {
      out.converged = true;
      break;
    }
  }
  out.outliers = best;
  fit.set_noise(noise);
  fit.settle_lambda(best_lambda);
  fit.minimize([&](const Fit& f) { return ranged_expected_mse(f, beta, noise); });
  out.lambda = fit.lambda();
  out.flags = detail::outlier_flags(fit, noise, flag_probability);
  return out;
}

}  // namespace tspline

#endif  // TSPLINE_ROBUST_HPP
