#ifndef TSPLINE_SMOOTHING_HPP
#define TSPLINE_SMOOTHING_HPP

// Smoothing spline with tension. The fitted path minimizes
//
//   (1/N) sum_i (x_i - x(t_i))^2 / w_i  +  lambda / (t_N - t_1) * int (d^T x / dt^T)^2 dt
//
// where w_i are the per-observation variances (sigma^2 for Gaussian noise,
// IRLS weights otherwise). In matrix form the coefficients solve
//
//   [X^T W X + lambda_1 G] xi = X^T W x + mu lambda_1 c,   lambda_1 = lambda N / (t_N - t_1),
//
// with W = diag(1 / w_i), G the Gram matrix of T-th derivative splines and
// c their integrals. `lambda` is always quoted in the normalization of the
// first line, so that lambda ~ (1 - 1/n_eff) / x_rms^(T)^2.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tspline/banded.hpp"
#include "tspline/basis.hpp"
#include "tspline/distributions.hpp"
#include "tspline/error.hpp"
#include "tspline/optimize.hpp"
#include "tspline/spectral.hpp"
#include "tspline/spline.hpp"

namespace tspline {

/// Gauss-Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

/// G = V^T V (Gram matrix of T-th derivative B-splines over the knot support)
/// and c = V^T iota (their integrals).
struct TensionMatrix {
  /// T-th derivative basis at one quadrature node, with the node weight.
  struct Row {
    std::size_t start;
    double weight;
    std::array<double, max_order> values;
  };
  BandedSymmetric gram;
  std::vector<double> integrals;
  int tension_order = 0;
  std::vector<Row> rows;
};

inline TensionMatrix tension_matrix(const KnotVector& kv, int tension) {
  const int k = kv.order();
  if (tension < 0 || tension > k - 1) {
    throw invalid_input("tension_matrix: tension order must lie in 0..K-1");
  }
  const std::size_t m = kv.basis_count();
  TensionMatrix out{BandedSymmetric(m, static_cast<std::size_t>(k - 1)), std::vector<double>(m, 0.0),
                    tension};
  // The integrand is a polynomial of degree 2(K-1-T) on each knot interval.
  const int nodes = std::max(1, k - tension);
  std::vector<double> gx, gw;
  gauss_legendre(nodes, gx, gw);
  const auto tau = kv.knots();
  for (std::size_t mu = static_cast<std::size_t>(k - 1); mu < m; ++mu) {
    const double a = tau[mu], b = tau[mu + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    const std::size_t first = mu + 1 - static_cast<std::size_t>(k);
    for (int q = 0; q < nodes; ++q) {
      const double t = mid + half * gx[q];
      const double w = half * gw[q];
      const auto v = basis_window(kv, mu, t, tension);
      TensionMatrix::Row row{first, w, {}};
      for (int r = 0; r < k; ++r) row.values[r] = v[r];
      out.rows.push_back(row);
      for (int r = 0; r < k; ++r) {
        out.integrals[first + r] += w * v[r];
        for (int s = 0; s <= r; ++s) out.gram.at(first + r, first + s) += w * v[r] * v[s];
      }
    }
  }
  return out;
}

namespace detail {

/// X^T W X + lambda_1 G as a band matrix; `precision` holds W's diagonal.
inline BandedSymmetric normal_matrix(const BasisMatrix& x, const TensionMatrix& g,
                                     std::span<const double> precision, double matrix_lambda) {
  BandedSymmetric a(x.cols(), static_cast<std::size_t>(x.order() - 1));
  const int k = x.order();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    const std::size_t s0 = x.start(i);
    for (int r = 0; r < k; ++r) {
      if (row[r] == 0.0) continue;
      for (int s = 0; s <= r; ++s) a.at(s0 + r, s0 + s) += precision[i] * row[r] * row[s];
    }
  }
  if (matrix_lambda != 0.0) a.add_scaled(g.gram, matrix_lambda);
  return a;
}

/// One SQUAREM extrapolation from three successive fixed-point iterates.
/// Falls back to the last iterate when the step leaves positive weights.
inline std::vector<double> squarem_step(const std::vector<double>& w0, const std::vector<double>& w1,
                                        const std::vector<double>& w2) {
  double rr = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    const double r = w1[i] - w0[i];
    const double v = w2[i] - 2.0 * w1[i] + w0[i];
    rr += r * r;
    vv += v * v;
  }
  if (!(vv > 0.0)) return w2;
  const double alpha = std::min(-1.0, -std::sqrt(rr / vv));
  std::vector<double> out(w0.size());
  for (std::size_t i = 0; i < w0.size(); ++i) {
    const double r = w1[i] - w0[i];
    const double v = w2[i] - 2.0 * w1[i] + w0[i];
    out[i] = w0[i] - 2.0 * alpha * r + alpha * alpha * v;
    if (!(out[i] > 0.0) || !std::isfinite(out[i])) return w2;
  }
  return out;
}

/// Orthogonal factorization of the stacked rows [V; X] with weights
/// [lambda_1 w_q; W] and right-hand side [mu; x]. Both row sets are already
/// ordered by first column and are merged on it, penalty rows first on ties.
inline void stacked_qr(BandedQR& qr, const BasisMatrix& x, const TensionMatrix& g,
                       std::span<const double> precision, std::span<const double> values,
                       double matrix_lambda, double mu) {
  const int k = x.order();
  qr.reset(x.cols(), static_cast<std::size_t>(k - 1));
  const bool penalty = matrix_lambda > 0.0;
  std::size_t q = 0;
  auto flush_penalty = [&](std::size_t upto) {
    for (; penalty && q < g.rows.size() && g.rows[q].start <= upto; ++q) {
      const auto& row = g.rows[q];
      qr.add_row(row.start, std::span<const double>(row.values.data(), k), mu, matrix_lambda * row.weight);
    }
  };
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t start = x.start(i);
    flush_penalty(start);
    const std::size_t len = std::min<std::size_t>(k, x.cols() - start);
    qr.add_row(start, x.row(i).first(len), values[i], precision[i]);
  }
  flush_penalty(x.cols());
}

/// X^T W v.
inline std::vector<double> weighted_transpose(const BasisMatrix& x, std::span<const double> precision,
                                              std::span<const double> v) {
  std::vector<double> out(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    for (int r = 0; r < x.order(); ++r) out[x.start(i) + r] += row[r] * precision[i] * v[i];
  }
  return out;
}

struct PenalizedSolution {
  std::vector<double> xi;
  BandedLDLT factor;  // of X^T W X + lambda_1 G
};

inline PenalizedSolution solve_penalized(const BasisMatrix& x, const TensionMatrix& g,
                                         std::span<const double> precision, std::span<const double> values,
                                         double matrix_lambda, double mu) {
  BandedQR qr;
  stacked_qr(qr, x, g, precision, values, matrix_lambda, mu);
  return {qr.solve(), qr.ldlt()};
}

}  // namespace detail

/// xi = [X^T W X + lambda_1 G]^{-1} [X^T W x + mu lambda_1 c], computed as
/// the equivalent banded least-squares problem. `precision` is the diagonal of W; lambda_1 is the matrix
/// normalization (see the file comment).
inline std::vector<double> solve_coefficients(const BasisMatrix& x, const TensionMatrix& g,
                                              std::span<const double> precision,
                                              std::span<const double> values, double matrix_lambda,
                                              double mu = 0.0) {
  if (!(matrix_lambda >= 0.0)) throw invalid_input("solve_coefficients: lambda must be >= 0");
  if (values.size() != x.rows() || precision.size() != x.rows()) {
    throw invalid_input("solve_coefficients: dimension mismatch");
  }
  return detail::solve_penalized(x, g, precision, values, matrix_lambda, mu).xi;
}

/// S = X [X^T W X + lambda_1 G]^{-1} X^T W as a dense N x N matrix.
inline Eigen::MatrixXd smoothing_matrix(const BasisMatrix& x, const TensionMatrix& g,
                                        std::span<const double> precision, double matrix_lambda) {
  if (!(matrix_lambda >= 0.0)) throw invalid_input("smoothing_matrix: lambda must be >= 0");
  const std::vector<double> zero(x.rows(), 0.0);
  const BandedLDLT f = detail::solve_penalized(x, g, precision, zero, matrix_lambda, 0.0).factor;
  const std::size_t n = x.rows();
  Eigen::MatrixXd s(n, n);
  std::vector<double> rhs(x.cols());
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(rhs.begin(), rhs.end(), 0.0);
    const auto row = x.row(j);
    for (int r = 0; r < x.order(); ++r) rhs[x.start(j) + r] = row[r] * precision[j];
    const auto y = f.solve(rhs);
    const auto col = x.apply(y);
    for (std::size_t i = 0; i < n; ++i) s(i, j) = col[i];
  }
  return s;
}

/// (1/N) ||(S - I) x||^2 + (2 sigma^2 / N) Tr S - sigma^2.
inline double expected_mse(const Eigen::MatrixXd& s, std::span<const double> x, double sigma2) {
  if (!(sigma2 > 0.0)) throw invalid_input("expected_mse: sigma^2 must be positive");
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const double n = static_cast<double>(x.size());
  return (s * xv - xv).squaredNorm() / n + 2.0 * sigma2 / n * s.trace() - sigma2;
}

struct EffectiveSampleSize {
  double n_eff_var;  // +infinity when the residual variance reaches sigma^2
  double n_eff_se;
};

namespace detail {
inline double n_eff_from_residuals(double rss_over_n, double sigma2) {
  const double ratio = rss_over_n / sigma2;
  if (ratio >= 1.0) return std::numeric_limits<double>::infinity();
  return std::max(1.0, 1.0 / (1.0 - ratio));
}
}  // namespace detail

/// n_eff^var from (1 - 1/n) sigma^2 = ||(I - S) x||^2 / N and
/// n_eff^SE from sigma^2 / n = Tr(S Sigma) / N.
inline EffectiveSampleSize effective_sample_size(const Eigen::MatrixXd& s, std::span<const double> x,
                                                 const Eigen::MatrixXd& sigma, double sigma2) {
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const double n = static_cast<double>(x.size());
  const double rss = (xv - s * xv).squaredNorm() / n;
  const double tr = (s * sigma).trace() / n;
  return {detail::n_eff_from_residuals(rss, sigma2), sigma2 / tr};
}

/// Interpolation condition Gamma = sigma / (u_rms dt).
inline double interpolation_gamma(double sigma, double u_rms, double dt) {
  if (!(u_rms > 0.0)) throw degenerate_fit("interpolation condition: u_rms must be positive");
  return sigma / (u_rms * dt);
}

/// n_eff^Gamma = max(1, C Gamma^m).
inline double effective_sample_size_from_gamma(double gamma, double c = 14.0, double m = 0.71) {
  return std::max(1.0, c * std::pow(gamma, m));
}

/// lambda_init = (1 - 1/n_eff^Gamma) / x_rms^(T)^2.
inline double lambda_initial(double x_rms_t, double u_rms, double sigma, double dt, double c = 14.0,
                             double m = 0.71) {
  if (!(x_rms_t > 0.0)) throw degenerate_fit("lambda_initial: x_rms^(T) must be positive");
  const double n_eff = effective_sample_size_from_gamma(interpolation_gamma(sigma, u_rms, dt), c, m);
  return (1.0 - 1.0 / n_eff) / (x_rms_t * x_rms_t);
}

/// Highest frequency a fit with effective sample size n_eff resolves.
inline double effective_nyquist(double n_eff, double dt) {
  if (!(n_eff > 0.0) || !(dt > 0.0)) throw invalid_input("effective_nyquist: inputs must be positive");
  return 1.0 / (2.0 * n_eff * dt);
}

inline double median_interval(std::span<const double> times) {
  if (times.size() < 2) throw insufficient_data("median_interval: need two times");
  std::vector<double> d(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i) d[i - 1] = times[i] - times[i - 1];
  const std::size_t h = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + h, d.end());
  if (d.size() % 2 == 1) return d[h];
  const double upper = d[h];
  std::nth_element(d.begin(), d.begin() + h - 1, d.end());
  return 0.5 * (upper + d[h - 1]);
}

/// Skip factor max(1, floor(2 n_eff / 3)).
inline std::size_t knot_skip(double n_eff) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(2.0 * n_eff / 3.0)));
}

/// Interpolation knots over every k-th observation (end points always kept).
inline KnotVector reduced_knots(std::span<const double> times, double n_eff, int order) {
  if (!(n_eff >= 1.0)) throw invalid_input("reduced_knots: n_eff must be >= 1");
  std::size_t k = knot_skip(n_eff);
  std::vector<double> subset;
  for (;; --k) {
    subset.clear();
    for (std::size_t i = 0; i < times.size(); i += k) subset.push_back(times[i]);
    if (subset.back() != times.back()) subset.push_back(times.back());
    if (subset.size() >= static_cast<std::size_t>(order) || k == 1) break;
  }
  return interpolation_knots(subset, order);
}

inline double mean_square_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw invalid_input("mean_square_error: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

struct SmoothingOptions {
  int order = 4;             // K; spline degree S = K - 1
  int tension = -1;          // T; negative selects T = S
  double mean_tension = 0.0; // mu, mean value of the T-th derivative
  std::optional<KnotVector> knots;  // default: canonical interpolation knots
  /// Dense measurement covariance. When set the solve is dense and IRLS is off.
  std::optional<Eigen::MatrixXd> covariance;
  double irls_tolerance = 1e-8;
  int irls_max_iterations = 200;
  bool irls_warm_start = true;
  /// Squared extrapolation (SQUAREM) on the IRLS weights every second step.
  bool irls_accelerate = true;
  double gamma_c = 14.0;
  double gamma_m = 0.71;
  double spectral_q = 20.0;
};

/// A-priori tension estimate from the data.
struct AprioriEstimate {
  double u_rms = 0.0;
  double x_rms_t = 0.0;
  double gamma = 0.0;
  double n_eff = 1.0;
  double lambda = 0.0;
  bool signal_below_noise = false;
};

/// A-priori tension from the data alone: u_rms and x_rms^(T) from the
/// spectral estimator (samples treated as uniform at the median interval),
/// then Gamma, n_eff^Gamma and lambda_init.
inline AprioriEstimate estimate_apriori(std::span<const double> times, std::span<const double> values,
                                        double sigma, int tension, double c = 14.0, double m = 0.71,
                                        double q = 20.0) {
  AprioriEstimate e;
  const double dt = median_interval(times);
  const auto u = estimate_rms_derivative(values, dt, sigma, 1, q);
  const auto xt = estimate_rms_derivative(values, dt, sigma, tension, q);
  e.u_rms = u.value;
  e.x_rms_t = xt.value;
  e.signal_below_noise = u.signal_below_noise || xt.signal_below_noise;
  if (!(e.x_rms_t > 0.0)) {
    // Fall back to the raw T-th finite difference; it overstates x_rms and
    // therefore understates lambda, which a minimizer corrects.
    std::vector<double> d(values.begin(), values.end());
    for (int o = 0; o < tension; ++o) {
      for (std::size_t i = 0; i + 1 < d.size() - o; ++i) d[i] = (d[i + 1] - d[i]) / dt;
    }
    double s = 0.0;
    const std::size_t count = d.size() - tension;
    for (std::size_t i = 0; i < count; ++i) s += d[i] * d[i];
    e.x_rms_t = std::sqrt(s / static_cast<double>(count));
    if (!(e.x_rms_t > 0.0)) e.x_rms_t = 1.0;
  }
  if (e.u_rms > 0.0) {
    e.gamma = interpolation_gamma(sigma, e.u_rms, dt);
    e.n_eff = effective_sample_size_from_gamma(e.gamma, c, m);
  } else {
    e.gamma = std::numeric_limits<double>::infinity();
    e.n_eff = static_cast<double>(values.size());
  }
  e.lambda = (1.0 - 1.0 / e.n_eff) / (e.x_rms_t * e.x_rms_t);
  return e;
}

/// Fitted smoothing spline. Mutable while lambda, the noise model or IRLS
/// state change; confine an instance to one thread while doing so.
class SmoothingSpline {
 public:
  SmoothingSpline(std::vector<double> times, std::vector<double> values, NoiseModel noise,
                  SmoothingOptions options = {})
      : times_(std::move(times)), values_(std::move(values)), noise_(std::move(noise)),
        options_(std::move(options)) {
    if (times_.size() != values_.size()) throw invalid_input("SmoothingSpline: length mismatch");
    detail::require_strictly_increasing(times_, "SmoothingSpline");
    const int k = options_.order;
    if (k < 1 || k > max_order) throw invalid_input("SmoothingSpline: unsupported order");
    if (times_.size() < static_cast<std::size_t>(k) + 1) {
      throw insufficient_data("SmoothingSpline: need more than K observations");
    }
    tension_ = options_.tension < 0 ? k - 1 : options_.tension;
    if (tension_ < 1 || tension_ > k - 1) {
      throw invalid_input("SmoothingSpline: tension order must satisfy 1 <= T <= K-1");
    }
    knots_ = options_.knots ? *options_.knots : interpolation_knots(times_, k);
    if (knots_->order() != k) throw invalid_input("SmoothingSpline: knot order mismatch");
    if (knots_->domain_begin() > times_.front() || knots_->domain_end() < times_.back()) {
      throw invalid_input("SmoothingSpline: knots do not cover the observations");
    }
    x_ = evaluate_basis(*knots_, times_, 0);
    g_ = tension_matrix(*knots_, tension_);
    if (options_.covariance) {
      const auto& c = *options_.covariance;
      if (c.rows() != static_cast<Eigen::Index>(n()) || c.cols() != c.rows()) {
        throw invalid_input("SmoothingSpline: covariance must be N x N");
      }
    }
    reset_weights();
    apriori_ = compute_apriori();
    lambda_ = apriori_.lambda;
    // A very stiff a-priori tension can exceed what the factorization resolves
    // in double precision; back off until it does.
    for (int attempt = 0;; ++attempt) {
      try {
        refit();
        break;
      } catch (const numerical_failure&) {
        if (attempt >= 40 || lambda_ == 0.0) throw;
        lambda_ *= 0.1;
      }
    }
  }

  std::size_t n() const { return times_.size(); }
  int order() const { return options_.order; }
  int tension_order() const { return tension_; }
  const KnotVector& knots() const { return *knots_; }
  const NoiseModel& noise() const { return noise_; }
  const SmoothingOptions& options() const { return options_; }
  std::span<const double> times() const { return times_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> fitted() const { return fitted_; }
  /// Observed minus fitted, x_i - x(t_i).
  std::span<const double> residuals() const { return residuals_; }
  /// Effective per-observation variances w_i (the IRLS state).
  std::span<const double> weights() const { return w_; }
  const Spline& spline() const { return *spline_; }
  double lambda() const { return lambda_; }
  double matrix_lambda() const { return to_matrix_lambda(lambda_); }
  double mean_tension() const { return options_.mean_tension; }
  bool irls_converged() const { return irls_converged_; }
  int irls_iterations() const { return irls_iterations_; }
  const AprioriEstimate& apriori() const { return apriori_; }
  const std::optional<LogScaleMinimum>& last_minimization() const { return last_min_; }

  double operator()(double t, int derivative = 0) const { return (*spline_)(t, derivative); }

  /// Noise variance used by the expected-MSE and standard-error formulas.
  double noise_variance() const {
    if (options_.covariance) return options_.covariance->diagonal().mean();
    const double v = noise_.variance();
    return std::isfinite(v) ? v : noise_.scale() * noise_.scale();
  }

  void set_lambda(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw invalid_input("SmoothingSpline: lambda must be finite and >= 0");
    }
    lambda_ = lambda;
    refit(options_.irls_warm_start && irls_converged_);
  }

  /// set_lambda, stepping lambda down by decades while the factorization fails.
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

  void set_noise(NoiseModel noise) {
    noise_ = std::move(noise);
    refit();
  }

  void set_mean_tension(double mu) {
    options_.mean_tension = mu;
    refit();
  }

  /// Tr S_lambda.
  double trace() const {
    double t = 0.0;
    for (double d : smoothing_diagonal()) t += d;
    return t;
  }

  /// diag S_lambda, from the band of the inverse normal matrix.
  std::vector<double> smoothing_diagonal() const {
    std::vector<double> d(n());
    if (dense_s_) {
      for (std::size_t i = 0; i < n(); ++i) d[i] = (*dense_s_)(i, i);
      return d;
    }
    if (!inverse_band_) inverse_band_ = factor().inverse_band();
    const auto& z = *inverse_band_;
    const int k = order();
    for (std::size_t i = 0; i < n(); ++i) {
      const auto row = x_.row(i);
      const std::size_t s0 = x_.start(i);
      double q = 0.0;
      for (int r = 0; r < k; ++r) {
        if (row[r] == 0.0) continue;
        for (int s = 0; s < k; ++s) q += row[r] * row[s] * z(s0 + r, s0 + s);
      }
      d[i] = q / w_[i];
    }
    return d;
  }

  /// S_lambda v with the current weights (no mean-tension offset).
  std::vector<double> apply(std::span<const double> v) const {
    if (v.size() != n()) throw invalid_input("SmoothingSpline::apply: length mismatch");
    if (dense_s_) {
      const Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(n()));
      const Eigen::VectorXd r = *dense_s_ * vv;
      return {r.data(), r.data() + r.size()};
    }
    const auto xi = factor().solve(detail::weighted_transpose(x_, precision(), v));
    return x_.apply(xi);
  }

  Eigen::MatrixXd smoothing_matrix() const {
    if (dense_s_) return *dense_s_;
    return tspline::smoothing_matrix(x_, g_, precision(), matrix_lambda());
  }

  /// Measurement covariance Sigma (diagonal noise variance unless given).
  Eigen::MatrixXd covariance() const {
    if (options_.covariance) return *options_.covariance;
    return noise_variance() * Eigen::MatrixXd::Identity(n(), n());
  }

  double residual_mean_square() const {
    double s = 0.0;
    for (double r : residuals_) s += r * r;
    return s / static_cast<double>(n());
  }

  double expected_mse() const {
    const double s2 = noise_variance();
    const double nn = static_cast<double>(n());
    return residual_mean_square() + 2.0 * s2 / nn * trace() - s2;
  }

  EffectiveSampleSize effective_sample_size() const {
    const double s2 = noise_variance();
    const double nn = static_cast<double>(n());
    double tr_s_sigma;
    if (options_.covariance) {
      tr_s_sigma = (smoothing_matrix() * (*options_.covariance)).trace();
    } else {
      tr_s_sigma = s2 * trace();
    }
    return {detail::n_eff_from_residuals(residual_mean_square(), s2), s2 * nn / tr_s_sigma};
  }

  /// Integral of (x^(T))^2 over the support, xi^T G xi.
  double tension_penalty() const {
    const auto c = spline_->coefficients();
    const auto gc = g_.gram.multiply(c);
    double s = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) s += c[j] * gc[j];
    return s;
  }

  /// Minimize objective(*this) over lambda (log-space golden section from
  /// the current lambda, or the a-priori value when lambda is zero). Leaves
  /// the fit at the minimizer and returns it.
  double minimize(const std::function<double(const SmoothingSpline&)>& objective) {
    double start = lambda_ > 0.0 ? lambda_ : apriori_.lambda;
    if (!(start > 0.0)) start = 0.01 / (apriori_.x_rms_t * apriori_.x_rms_t);
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
    return lambda_;
  }

  double minimize_expected_mse() {
    return minimize([](const SmoothingSpline& s) { return s.expected_mse(); });
  }

 private:
  double to_matrix_lambda(double lambda) const {
    return lambda * static_cast<double>(n()) / (times_.back() - times_.front());
  }

  std::vector<double> precision() const {
    std::vector<double> p(n());
    for (std::size_t i = 0; i < n(); ++i) p[i] = 1.0 / w_[i];
    return p;
  }

  void reset_weights() {
    w_.assign(n(), noise_variance());
  }

  AprioriEstimate compute_apriori() const {
    return estimate_apriori(times_, values_, std::sqrt(noise_variance()), tension_, options_.gamma_c,
                            options_.gamma_m, options_.spectral_q);
  }


  /// A warm refit starts IRLS from the current weights instead of the noise
  /// variance; both iterate to the same fixed point.
  void refit(bool warm = false) {
    inverse_band_.reset();
    factor_.reset();
    dense_s_.reset();
    if (options_.covariance) {
      refit_dense();
      return;
    }
    const double lam1 = matrix_lambda();
    if (!warm || w_.size() != n()) reset_weights();
    const bool iterate = !noise_.is_gaussian();
    irls_converged_ = !iterate;
    irls_iterations_ = 0;
    std::vector<double> xi;
    std::vector<double> w0, w1;
    for (int it = 0;; ++it) {
      const auto p = precision();
      detail::stacked_qr(qr_, x_, g_, p, values_, lam1, options_.mean_tension);
      xi = qr_.solve();
      fitted_ = x_.apply(xi);
      irls_iterations_ = it + 1;
      if (!iterate) break;
      double change = 0.0;
      std::vector<double> next(n());
      for (std::size_t i = 0; i < n(); ++i) {
        next[i] = noise_.irls_weight(values_[i] - fitted_[i]);
        if (!std::isfinite(next[i])) next[i] = std::numeric_limits<double>::max() / 1e10;
        change = std::max(change, std::abs(next[i] - w_[i]) / w_[i]);
      }
      if (change < options_.irls_tolerance) {
        irls_converged_ = true;
        break;
      }
      if (it + 1 >= options_.irls_max_iterations) break;
      if (!options_.irls_accelerate) {
        w_ = std::move(next);
      } else if (w0.empty()) {
        w0 = w_;
        w_ = std::move(next);
        w1 = w_;
      } else {
        w_ = detail::squarem_step(w0, w1, next);
        w0.clear();
      }
    }
    finish(std::move(xi));
  }

  void refit_dense() {
    const double lam1 = matrix_lambda();
    const Eigen::MatrixXd xd = x_.to_dense();
    const Eigen::MatrixXd winv = options_.covariance->inverse();
    const Eigen::MatrixXd xtw = xd.transpose() * winv;
    const Eigen::MatrixXd a = xtw * xd + lam1 * g_.gram.to_dense();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw numerical_failure("SmoothingSpline: dense normal matrix is not positive definite");
    }
    const Eigen::Map<const Eigen::VectorXd> xv(values_.data(), static_cast<Eigen::Index>(n()));
    Eigen::VectorXd rhs = xtw * xv;
    if (options_.mean_tension != 0.0) {
      for (Eigen::Index j = 0; j < rhs.size(); ++j) {
        rhs(j) += options_.mean_tension * lam1 * g_.integrals[j];
      }
    }
    const Eigen::VectorXd xi = ldlt.solve(rhs);
    dense_s_ = xd * ldlt.solve(xtw);
    w_ = std::vector<double>(options_.covariance->diagonal().data(),
                             options_.covariance->diagonal().data() + n());
    fitted_ = x_.apply(std::span<const double>(xi.data(), n_coefficients()));
    irls_converged_ = true;
    irls_iterations_ = 1;
    finish(std::vector<double>(xi.data(), xi.data() + xi.size()));
  }

  std::size_t n_coefficients() const { return x_.cols(); }

  const BandedLDLT& factor() const {
    if (!factor_) factor_ = qr_.ldlt();
    return *factor_;
  }

  void finish(std::vector<double> xi) {
    residuals_.resize(n());
    for (std::size_t i = 0; i < n(); ++i) residuals_[i] = values_[i] - fitted_[i];
    spline_.emplace(*knots_, std::move(xi));
  }

  std::vector<double> times_;
  std::vector<double> values_;
  NoiseModel noise_;
  SmoothingOptions options_;
  int tension_ = 1;
  std::optional<KnotVector> knots_;
  BasisMatrix x_{{}, 0, 0, 1};
  TensionMatrix g_;
  std::vector<double> w_;
  double lambda_ = 0.0;
  AprioriEstimate apriori_;
  mutable std::optional<BandedLDLT> factor_;
  BandedQR qr_;
  mutable std::optional<BandedSymmetric> inverse_band_;
  std::optional<Eigen::MatrixXd> dense_s_;
  std::vector<double> fitted_;
  std::vector<double> residuals_;
  std::optional<Spline> spline_;
  bool irls_converged_ = true;
  int irls_iterations_ = 0;
  std::optional<LogScaleMinimum> last_min_;
};

}  // namespace tspline

#endif  // TSPLINE_SMOOTHING_HPP
