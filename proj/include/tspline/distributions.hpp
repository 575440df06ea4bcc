#ifndef TSPLINE_DISTRIBUTIONS_HPP
#define TSPLINE_DISTRIBUTIONS_HPP

// Error models for observation noise. Every model is a symmetric, zero-mean
// density in meters. Beyond pdf/cdf/quantile the smoother needs two things
// from a model: the IRLS weight w(z) = -z p / p' (an effective per-point
// variance) and truncated second moments for the ranged expected MSE.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "tspline/error.hpp"

namespace tspline {

namespace detail {
using fast_policy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;
}  // namespace detail

class NoiseModel {
 public:
  struct Gaussian {
    double sigma;
  };
  struct StudentT {
    double sigma;
    double nu;
    double log_norm;  // log of the density at zero
  };
  struct Mixture {
    double alpha;
    std::shared_ptr<const NoiseModel> noise;
    std::shared_ptr<const NoiseModel> outlier;
  };

  static NoiseModel gaussian(double sigma) {
    if (!(sigma > 0.0)) throw invalid_input("gaussian noise: sigma must be positive");
    return NoiseModel(Gaussian{sigma});
  }
  static NoiseModel student_t(double sigma, double nu) {
    if (!(sigma > 0.0) || !(nu > 0.0)) {
      throw invalid_input("student-t noise: sigma and nu must be positive");
    }
    const double log_norm = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                            std::log(sigma * std::sqrt(nu * std::numbers::pi));
    return NoiseModel(StudentT{sigma, nu, log_norm});
  }
  /// (1 - alpha) p_noise + alpha p_outlier.
  static NoiseModel mixture(double alpha, NoiseModel noise, NoiseModel outlier) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw invalid_input("mixture: alpha must lie in [0, 1)");
    return NoiseModel(Mixture{alpha, std::make_shared<const NoiseModel>(std::move(noise)),
                              std::make_shared<const NoiseModel>(std::move(outlier))});
  }
  /// Student-t fit to motionless GPS receiver errors: sigma_s = 8.5 m, nu = 4.5.
  static NoiseModel gps_default() { return student_t(8.5, 4.5); }

  bool is_gaussian() const { return std::holds_alternative<Gaussian>(rep_); }
  bool is_student_t() const { return std::holds_alternative<StudentT>(rep_); }
  bool is_mixture() const { return std::holds_alternative<Mixture>(rep_); }
  const Gaussian* as_gaussian() const { return std::get_if<Gaussian>(&rep_); }
  const StudentT* as_student_t() const { return std::get_if<StudentT>(&rep_); }
  const Mixture* as_mixture() const { return std::get_if<Mixture>(&rep_); }

  /// Width parameter: sigma_g, sigma_s, or the noise component's scale.
  double scale() const {
    return std::visit(
        [](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Mixture>) return m.noise->scale();
          else return m.sigma;
        },
        rep_);
  }

  double variance() const {
    return std::visit(
        [](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Gaussian>) {
            return m.sigma * m.sigma;
          } else if constexpr (std::is_same_v<T, StudentT>) {
            if (m.nu <= 2.0) return std::numeric_limits<double>::infinity();
            return m.sigma * m.sigma * m.nu / (m.nu - 2.0);
          } else {
            return (1.0 - m.alpha) * m.noise->variance() + m.alpha * m.outlier->variance();
          }
        },
        rep_);
  }

  double pdf(double z) const {
    return std::visit(
        [z](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Gaussian>) {
            const double u = z / m.sigma;
            return std::exp(-0.5 * u * u) / (m.sigma * std::sqrt(2.0 * std::numbers::pi));
          } else if constexpr (std::is_same_v<T, StudentT>) {
            return std::exp(m.log_norm -
                            0.5 * (m.nu + 1.0) * std::log1p(z * z / (m.sigma * m.sigma * m.nu)));
          } else {
            return (1.0 - m.alpha) * m.noise->pdf(z) + m.alpha * m.outlier->pdf(z);
          }
        },
        rep_);
  }

  double cdf(double z) const {
    return std::visit(
        [z](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Gaussian>) {
            return 0.5 * std::erfc(-z / (m.sigma * std::numbers::sqrt2));
          } else if constexpr (std::is_same_v<T, StudentT>) {
            if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
            const boost::math::students_t_distribution<double, detail::fast_policy> t(m.nu);
            return boost::math::cdf(t, z / m.sigma);
          } else {
            return (1.0 - m.alpha) * m.noise->cdf(z) + m.alpha * m.outlier->cdf(z);
          }
        },
        rep_);
  }

  /// Inverse cdf, p in (0, 1).
  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw invalid_input("quantile: probability must lie in (0, 1)");
    if (const auto* g = as_gaussian()) {
      return g->sigma * boost::math::quantile(boost::math::normal_distribution<double>(), p);
    }
    if (const auto* t = as_student_t()) {
      return t->sigma *
             boost::math::quantile(boost::math::students_t_distribution<double>(t->nu), p);
    }
    // Mixture: bisection on the cdf.
    const double s = scale();
    double lo = -s, hi = s;
    while (cdf(lo) > p) lo *= 2.0;
    while (cdf(hi) < p) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  /// -p'(z) / z, finite at z = 0.
  double score_over_z(double z) const {
    return std::visit(
        [z](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Gaussian>) {
            return NoiseModel(m).pdf(z) / (m.sigma * m.sigma);
          } else if constexpr (std::is_same_v<T, StudentT>) {
            return NoiseModel(m).pdf(z) * (m.nu + 1.0) / (m.nu * m.sigma * m.sigma + z * z);
          } else {
            return (1.0 - m.alpha) * m.noise->score_over_z(z) +
                   m.alpha * m.outlier->score_over_z(z);
          }
        },
        rep_);
  }

  /// IRLS weight w(z) = -z p(z) / p'(z): the Gaussian variance whose
  /// stationarity condition matches this model's at residual z.
  double irls_weight(double z) const {
    if (const auto* g = as_gaussian()) return g->sigma * g->sigma;
    if (const auto* t = as_student_t()) {
      return (t->nu * t->sigma * t->sigma + z * z) / (t->nu + 1.0);
    }
    const double h = score_over_z(z);
    if (!(h > 0.0)) return std::numeric_limits<double>::infinity();
    return pdf(z) / h;
  }

  /// Integral of z^2 p(z) over [a, b] (infinite limits allowed).
  double variance_in_range(double a, double b) const {
    if (!(a < b)) throw invalid_input("variance_in_range: need a < b");
    auto f = [this](double z) { return z * z * pdf(z); };
    // Split at zero and at +-scale so the adaptive rule resolves the core.
    const double s = scale();
    std::vector<double> cuts{a};
    for (double c : {-s, 0.0, s}) {
      if (c > a && c < b) cuts.push_back(c);
    }
    cuts.push_back(b);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, cuts[i], cuts[i + 1],
                                                                           20, 1e-12);
    }
    return total;
  }

  template <class Rng>
  double sample(Rng& rng) const {
    return std::visit(
        [&rng](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Gaussian>) {
            return m.sigma * std::normal_distribution<double>()(rng);
          } else if constexpr (std::is_same_v<T, StudentT>) {
            return m.sigma * std::student_t_distribution<double>(m.nu)(rng);
          } else {
            const bool outlier = std::uniform_real_distribution<double>()(rng) < m.alpha;
            return outlier ? m.outlier->sample(rng) : m.noise->sample(rng);
          }
        },
        rep_);
  }

  std::string describe() const {
    return std::visit(
        [](const auto& m) -> std::string {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Gaussian>) {
            return "gaussian(sigma=" + std::to_string(m.sigma) + ")";
          } else if constexpr (std::is_same_v<T, StudentT>) {
            return "student_t(sigma=" + std::to_string(m.sigma) + ", nu=" + std::to_string(m.nu) +
                   ")";
          } else {
            return "mixture(alpha=" + std::to_string(m.alpha) + ", " + m.noise->describe() + ", " +
                   m.outlier->describe() + ")";
          }
        },
        rep_);
  }

 private:
  template <class Rep>
  explicit NoiseModel(Rep r) : rep_(std::move(r)) {}

  std::variant<Gaussian, StudentT, Mixture> rep_;
};

/// Tukey's biweight as an IRLS weight. Residuals beyond c * sigma carry no
/// information and are reported as excluded (std::nullopt).
struct TukeyBiweight {
  double sigma;
  double c = 4.685;

  std::optional<double> irls_weight(double z) const {
    const double u = z / (c * sigma);
    if (std::abs(u) >= 1.0) return std::nullopt;
    const double v = 1.0 - u * u;
    return sigma * sigma / (v * v);
  }
};

/// Rough empirical autocorrelation of GPS position errors at lag tau seconds.
inline double gps_error_autocorrelation(double tau) {
  tau = std::abs(tau);
  return std::exp(std::max(-tau / 100.0, -tau / 760.0 - 1.35));
}

/// Distribution of the distance sqrt(ex^2 + ey^2) when ex and ey are
/// independent draws from the same axis model.
class DistanceDistribution {
 public:
  explicit DistanceDistribution(NoiseModel axis) : axis_(std::move(axis)) {}

  const NoiseModel& axis() const { return axis_; }

  double pdf(double r) const {
    if (r < 0.0) return 0.0;
    if (const auto* g = axis_.as_gaussian()) {
      const double s2 = g->sigma * g->sigma;
      return r / s2 * std::exp(-0.5 * r * r / s2);
    }
    // p_R(r) = r * integral over the circle of p(r cos th) p(r sin th).
    auto f = [this, r](double th) { return axis_.pdf(r * std::cos(th)) * axis_.pdf(r * std::sin(th)); };
    const double quarter = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, 0.0, 0.5 * std::numbers::pi, 15, 1e-12);
    return 4.0 * r * quarter;
  }

  double cdf(double r) const {
    if (r <= 0.0) return 0.0;
    if (std::isinf(r)) return 1.0;
    if (const auto* g = axis_.as_gaussian()) {
      return -std::expm1(-0.5 * r * r / (g->sigma * g->sigma));
    }
    // P(R <= r) = integral_{-r}^{r} p(x) (2 F(sqrt(r^2 - x^2)) - 1) dx, with x = r sin th.
    auto f = [this, r](double th) {
      const double c = std::cos(th);
      return axis_.pdf(r * std::sin(th)) * (2.0 * axis_.cdf(r * c) - 1.0) * r * c;
    };
    const double half = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, 0.0, 0.5 * std::numbers::pi, 15, 1e-12);
    return std::clamp(2.0 * half, 0.0, 1.0);
  }

  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw invalid_input("distance quantile: p must lie in (0, 1)");
    if (const auto* g = axis_.as_gaussian()) return g->sigma * std::sqrt(-2.0 * std::log1p(-p));
    double lo = 0.0, hi = axis_.scale();
    while (cdf(hi) < p) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-10 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  /// Integral of r^2 p_R(r) over [0, r_max].
  double second_moment_below(double r_max) const {
    auto f = [this](double r) { return r * r * pdf(r); };
    const double s = axis_.scale();
    double total = 0.0, a = 0.0;
    for (double c : {s, 3.0 * s, r_max}) {
      const double b = std::min(c, r_max);
      if (b > a) {
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-12);
        a = b;
      }
    }
    return total;
  }

 private:
  NoiseModel axis_;
};

/// Distance-error model for isotropic two-component errors: Rayleigh for
/// Gaussian axes, numerical quadrature otherwise.
inline DistanceDistribution distance_error_distribution(const NoiseModel& axis) {
  return DistanceDistribution(axis);
}

/// Monte Carlo distance samples, the independent route to the quadrature cdf.
template <class Rng>
std::vector<double> sample_distances(const NoiseModel& axis, std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  for (auto& d : out) {
    const double ex = axis.sample(rng);
    const double ey = axis.sample(rng);
    d = std::hypot(ex, ey);
  }
  return out;
}

/// Anderson-Darling A^2 from the model cdf evaluated at each sample.
inline double anderson_darling_from_cdf(std::vector<double> f) {
  if (f.size() < 8) throw insufficient_data("anderson_darling: need at least 8 samples");
  std::sort(f.begin(), f.end());
  const std::size_t n = f.size();
  for (double& v : f) v = std::clamp(v, 1e-12, 1.0 - 1e-12);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += (2.0 * static_cast<double>(i) + 1.0) * (std::log(f[i]) + std::log1p(-f[n - 1 - i]));
  }
  return -static_cast<double>(n) - s / static_cast<double>(n);
}

/// Anderson-Darling A^2 of `samples` against a continuous cdf.
template <class Cdf>
  requires std::invocable<Cdf&, double>
double anderson_darling(std::span<const double> samples, Cdf&& cdf) {
  std::vector<double> f(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) f[i] = cdf(samples[i]);
  return anderson_darling_from_cdf(std::move(f));
}

template <class Dist>
double anderson_darling(std::span<const double> samples, const Dist& dist) {
  return anderson_darling(samples, [&dist](double z) { return dist.cdf(z); });
}

/// A^2 of the samples inside [lo, hi] against the model conditioned on that
/// range. Returns +infinity when fewer than 8 samples fall inside.
template <class Dist>
double anderson_darling_in_range(std::span<const double> samples, const Dist& dist, double lo,
                                 double hi) {
  std::vector<double> inside;
  inside.reserve(samples.size());
  for (double z : samples) {
    if (z >= lo && z <= hi) inside.push_back(z);
  }
  if (inside.size() < 8) return std::numeric_limits<double>::infinity();
  const double f_lo = dist.cdf(lo);
  const double mass = dist.cdf(hi) - f_lo;
  if (!(mass > 0.0)) return std::numeric_limits<double>::infinity();
  return anderson_darling(std::span<const double>(inside),
                          [&](double z) { return (dist.cdf(z) - f_lo) / mass; });
}

/// A^2 restricted to the model's interquartile range.
template <class Dist>
double anderson_darling_interquartile(std::span<const double> samples, const Dist& dist) {
  return anderson_darling_in_range(samples, dist, dist.quantile(0.25), dist.quantile(0.75));
}

/// Partial Anderson-Darling statistic
///   N * int_{F(lo)}^{F(hi)} (F_N(u) - u)^2 / (u (1 - u)) du
/// over all samples, with u = F(z). Unlike the conditional form it also
/// responds to how much of the sample falls inside [lo, hi].
template <class Dist>
double anderson_darling_partial(std::span<const double> samples, const Dist& dist, double lo, double hi) {
  if (samples.size() < 8) throw insufficient_data("anderson-darling: need at least 8 samples");
  const double a = std::clamp(dist.cdf(lo), 1e-12, 1.0 - 1e-12);
  const double b = std::clamp(dist.cdf(hi), 1e-12, 1.0 - 1e-12);
  if (!(b > a)) return std::numeric_limits<double>::infinity();
  std::vector<double> u(samples.size());
  std::transform(samples.begin(), samples.end(), u.begin(), [&](double z) { return dist.cdf(z); });
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  // (c - u)^2 / (u (1 - u)) = -1 + c^2 / u + (1 - c)^2 / (1 - u)
  auto piece = [](double c, double x0, double x1) {
    return -(x1 - x0) + c * c * std::log(x1 / x0) + (1.0 - c) * (1.0 - c) * std::log((1.0 - x0) / (1.0 - x1));
  };
  auto k = static_cast<std::size_t>(std::upper_bound(u.begin(), u.end(), a) - u.begin());
  double x = a, total = 0.0;
  while (x < b) {
    const double next = k < u.size() ? std::min(u[k], b) : b;
    if (next > x) total += piece(static_cast<double>(k) / n, x, next);
    x = next;
    ++k;
  }
  return n * total;
}

}  // namespace tspline

#endif  // TSPLINE_DISTRIBUTIONS_HPP
