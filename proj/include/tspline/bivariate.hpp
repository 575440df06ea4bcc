#ifndef TSPLINE_BIVARIATE_HPP
#define TSPLINE_BIVARIATE_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tspline/distributions.hpp"
#include "tspline/error.hpp"
#include "tspline/optimize.hpp"
#include "tspline/polynomial.hpp"
#include "tspline/smoothing.hpp"
#include "tspline/track.hpp"

namespace tspline {

inline constexpr double earth_radius = 6371000.0;

/// Spherical transverse Mercator about `central_meridian` (degrees).
struct Projection {
  double central_meridian = 0.0;

  std::pair<double, double> forward(double lat, double lon) const {
    if (!(std::abs(lat) < 89.0)) throw out_of_range("projection: |latitude| must be below 89 degrees");
    const double phi = lat * std::numbers::pi / 180.0;
    const double dl = (lon - central_meridian) * std::numbers::pi / 180.0;
    const double x = earth_radius * std::atanh(std::cos(phi) * std::sin(dl));
    const double y = earth_radius * std::atan2(std::tan(phi), std::cos(dl));
    return {x, y};
  }

  std::pair<double, double> inverse(double x, double y) const {
    const double xs = x / earth_radius, ys = y / earth_radius;
    const double phi = std::asin(std::sin(ys) / std::cosh(xs));
    const double dl = std::atan2(std::sinh(xs), std::cos(ys));
    return {phi * 180.0 / std::numbers::pi, central_meridian + dl * 180.0 / std::numbers::pi};
  }
};

/// Projection centred on the mid-range of the longitudes.
inline Projection projection_for(std::span<const double> lons) {
  if (lons.empty()) throw insufficient_data("projection: no longitudes");
  const auto [lo, hi] = std::minmax_element(lons.begin(), lons.end());
  if (*hi - *lo > 90.0) throw out_of_range("projection: longitude span exceeds 90 degrees");
  return Projection{0.5 * (*lo + *hi)};
}

/// Projects a geographic track (x = latitude, y = longitude) to meters.
inline std::pair<TrackSeries, Projection> project_track(const TrackSeries& track) {
  if (!track.geographic) return {track, Projection{}};
  const Projection p = projection_for(track.y);
  TrackSeries out = track;
  out.geographic = false;
  for (std::size_t i = 0; i < track.size(); ++i) {
    std::tie(out.x[i], out.y[i]) = p.forward(track.x[i], track.y[i]);
  }
  return {std::move(out), p};
}

/// Great-circle distance in meters.
inline double haversine(double lat1, double lon1, double lat2, double lon2) {
  const double r = std::numbers::pi / 180.0;
  const double dphi = (lat2 - lat1) * r, dl = (lon2 - lon1) * r;
  const double a = std::pow(std::sin(dphi / 2), 2) +
                   std::cos(lat1 * r) * std::cos(lat2 * r) * std::pow(std::sin(dl / 2), 2);
  return 2.0 * earth_radius * std::asin(std::min(1.0, std::sqrt(a)));
}

/// Mean path of degree T+1 for one axis. Non-Gaussian noise uses IRLS
/// weights. Returns the polynomial and its final precision weights.
inline std::pair<PolynomialFit, std::vector<double>> fit_mean(std::span<const double> times,
                                                              std::span<const double> values,
                                                              int tension, const NoiseModel& noise) {
  if (times.size() <= static_cast<std::size_t>(tension) + 2) {
    throw insufficient_data("remove_mean: need more than T+2 observations");
  }
  const int degree = tension + 1;
  std::vector<double> precision(times.size(), 1.0);
  PolynomialFit poly(times, values, degree);
  if (noise.is_gaussian()) return {poly, precision};
  for (int it = 0; it < 100; ++it) {
    double change = 0.0;
    std::vector<double> next(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      next[i] = 1.0 / noise.irls_weight(values[i] - poly(times[i]));
      change = std::max(change, std::abs(next[i] - precision[i]) / precision[i]);
    }
    precision = std::move(next);
    poly = PolynomialFit(times, values, degree, precision);
    if (change < 1e-10) break;
  }
  return {poly, precision};
}

struct MeanRemoval {
  PolynomialFit mean_x, mean_y;
  std::vector<double> precision_x, precision_y;
  TrackSeries residual;
};

inline MeanRemoval remove_mean(const TrackSeries& track, int tension,
                               const NoiseModel& noise = NoiseModel::gaussian(1.0)) {
  track.validate();
  auto [px, wx] = fit_mean(track.times, track.x, tension, noise);
  auto [py, wy] = fit_mean(track.times, track.y, tension, noise);
  MeanRemoval m{std::move(px), std::move(py), std::move(wx), std::move(wy), track};
  for (std::size_t i = 0; i < track.size(); ++i) {
    m.residual.x[i] -= m.mean_x(track.times[i]);
    m.residual.y[i] -= m.mean_y(track.times[i]);
  }
  if (m.residual.has_truth()) {
    for (std::size_t i = 0; i < track.size(); ++i) {
      m.residual.truth_x[i] -= m.mean_x(track.times[i]);
      m.residual.truth_y[i] -= m.mean_y(track.times[i]);
    }
  }
  return m;
}

/// S_T = S_mean + S_lambda - S_lambda S_mean.
inline Eigen::MatrixXd total_operator(const Eigen::MatrixXd& s_mean, const Eigen::MatrixXd& s_lambda) {
  if (s_mean.rows() != s_lambda.rows() || s_mean.cols() != s_lambda.cols()) {
    throw invalid_input("total_operator: operators are not conformable");
  }
  return s_mean + s_lambda - s_lambda * s_mean;
}

/// sqrt(diag(S_T Sigma S_T^T)).
inline std::vector<double> standard_errors(const Eigen::MatrixXd& s_total, const Eigen::MatrixXd& sigma) {
  const Eigen::MatrixXd c = s_total * sigma;
  std::vector<double> out(static_cast<std::size_t>(s_total.rows()));
  for (Eigen::Index i = 0; i < s_total.rows(); ++i) out[i] = std::sqrt(c.row(i).dot(s_total.row(i)));
  return out;
}

/// sqrt(diag(S Sigma)), the trace-form per-point error.
inline std::vector<double> standard_errors_trace(const Eigen::MatrixXd& s, const Eigen::MatrixXd& sigma) {
  const Eigen::MatrixXd c = s * sigma;
  std::vector<double> out(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) out[i] = std::sqrt(std::max(0.0, c(i, i)));
  return out;
}

struct BivariateOptions {
  SmoothingOptions smoothing;
  bool remove_mean = true;
};

/// Smoothing of x(t) and y(t) with one shared lambda after removing a
/// polynomial mean path from each axis.
class BivariateFit {
 public:
  BivariateFit(const TrackSeries& track, NoiseModel noise, BivariateOptions options = {})
      : track_(track), noise_(std::move(noise)), options_(std::move(options)) {
    track_.validate();
    if (track_.geographic) throw invalid_input("BivariateFit: project geographic tracks first");
    const int k = options_.smoothing.order;
    const int t = options_.smoothing.tension < 0 ? k - 1 : options_.smoothing.tension;
    if (options_.remove_mean) {
      mean_ = remove_mean(track_, t, noise_);
    } else {
      mean_ = MeanRemoval{PolynomialFit(track_.times, std::vector<double>(track_.size(), 0.0), 0),
                          PolynomialFit(track_.times, std::vector<double>(track_.size(), 0.0), 0),
                          {}, {}, track_};
    }
    fx_.emplace(track_.times, mean_.residual.x, noise_, options_.smoothing);
    fy_.emplace(track_.times, mean_.residual.y, noise_, options_.smoothing);
    const auto& ax = fx_->apriori();
    const auto& ay = fy_->apriori();
    apriori_lambda_ = 0.5 * (ax.lambda + ay.lambda);
    set_lambda(apriori_lambda_);
  }

  const TrackSeries& track() const { return track_; }
  const NoiseModel& noise() const { return noise_; }
  const SmoothingSpline& fit_x() const { return *fx_; }
  const SmoothingSpline& fit_y() const { return *fy_; }
  const PolynomialFit& mean_x() const { return mean_.mean_x; }
  const PolynomialFit& mean_y() const { return mean_.mean_y; }
  double lambda() const { return fx_->lambda(); }
  double apriori_lambda() const { return apriori_lambda_; }
  std::size_t size() const { return track_.size(); }
  const std::optional<LogScaleMinimum>& last_minimization() const { return last_min_; }

  void set_lambda(double lambda) {
    fx_->set_lambda(lambda);
    fy_->set_lambda(lambda);
  }

  void settle_lambda(double lambda) {
    for (int attempt = 0;; ++attempt) {
      try {
        set_lambda(lambda);
        return;
      } catch (const numerical_failure&) {
        if (attempt >= 40 || lambda == 0.0) throw;
        lambda *= 0.1;
      }
    }
  }

  void set_noise(const NoiseModel& noise) {
    fx_->set_noise(noise);
    fy_->set_noise(noise);
  }

  bool irls_converged() const { return fx_->irls_converged() && fy_->irls_converged(); }

  double x(double t, int derivative = 0) const { return mean_.mean_x(t, derivative) + (*fx_)(t, derivative); }
  double y(double t, int derivative = 0) const { return mean_.mean_y(t, derivative) + (*fy_)(t, derivative); }

  std::vector<double> fitted_x() const { return fitted(mean_.mean_x, *fx_); }
  std::vector<double> fitted_y() const { return fitted(mean_.mean_y, *fy_); }

  /// Observation minus fit, per axis (identical to the residual fits' residuals).
  std::span<const double> residuals_x() const { return fx_->residuals(); }
  std::span<const double> residuals_y() const { return fy_->residuals(); }

  /// Residual distances sqrt(ex^2 + ey^2).
  std::vector<double> residual_distances() const {
    std::vector<double> d(size());
    for (std::size_t i = 0; i < size(); ++i) d[i] = std::hypot(residuals_x()[i], residuals_y()[i]);
    return d;
  }

  /// Sum of the expected mean square errors of the two directions.
  double expected_mse() const { return fx_->expected_mse() + fy_->expected_mse(); }

  EffectiveSampleSize effective_sample_size() const {
    const auto a = fx_->effective_sample_size();
    const auto b = fy_->effective_sample_size();
    return {0.5 * (a.n_eff_var + b.n_eff_var), 0.5 * (a.n_eff_se + b.n_eff_se)};
  }

  double minimize(const std::function<double(const BivariateFit&)>& objective, double start = 0.0) {
    if (!(start > 0.0)) start = lambda() > 0.0 ? lambda() : fallback_lambda();
    auto result = minimize_log_scale(
        [&](double lambda) {
          try {
            set_lambda(lambda);
          } catch (const numerical_failure&) {
            return std::numeric_limits<double>::infinity();
          }
          return objective(*this);
        },
        start);
    last_min_ = result;
    settle_lambda(result.argument);
    return lambda();
  }

  double minimize_expected_mse() {
    return minimize([](const BivariateFit& f) { return f.expected_mse(); });
  }

  Eigen::MatrixXd mean_operator(int axis) const {
    const auto& poly = axis == 0 ? mean_.mean_x : mean_.mean_y;
    const auto& w = axis == 0 ? mean_.precision_x : mean_.precision_y;
    if (!options_.remove_mean) return Eigen::MatrixXd::Zero(size(), size());
    return poly.hat_matrix(track_.times, w);
  }

  Eigen::MatrixXd total_operator(int axis) const {
    const auto& f = axis == 0 ? *fx_ : *fy_;
    return tspline::total_operator(mean_operator(axis), f.smoothing_matrix());
  }

  /// Per-point standard errors, full propagation through S_T.
  std::vector<double> standard_errors(int axis) const {
    const auto& f = axis == 0 ? *fx_ : *fy_;
    return tspline::standard_errors(total_operator(axis), f.covariance());
  }

  /// Per-point standard errors in trace form, sqrt(diag(S_lambda Sigma)).
  std::vector<double> standard_errors_trace(int axis) const {
    const auto& f = axis == 0 ? *fx_ : *fy_;
    const auto d = f.smoothing_diagonal();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = std::sqrt(std::max(0.0, d[i] * f.noise_variance()));
    return out;
  }

 private:
  static std::vector<double> fitted(const PolynomialFit& mean, const SmoothingSpline& f) {
    std::vector<double> out(f.n());
    for (std::size_t i = 0; i < f.n(); ++i) out[i] = mean(f.times()[i]) + f.fitted()[i];
    return out;
  }

  double fallback_lambda() const {
    const double xr = std::max(fx_->apriori().x_rms_t, fy_->apriori().x_rms_t);
    return 0.01 / (xr * xr);
  }

  TrackSeries track_;
  NoiseModel noise_;
  BivariateOptions options_;
  MeanRemoval mean_;
  std::optional<SmoothingSpline> fx_, fy_;
  double apriori_lambda_ = 0.0;
  std::optional<LogScaleMinimum> last_min_;
};

}  // namespace tspline

#endif  // TSPLINE_BIVARIATE_HPP
