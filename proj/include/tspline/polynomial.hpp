#ifndef TSPLINE_POLYNOMIAL_HPP
#define TSPLINE_POLYNOMIAL_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tspline/error.hpp"

namespace tspline {

/// Weighted least-squares polynomial in a centered, scaled time variable
/// s = (t - center) / half_span, which keeps the Vandermonde system well
/// conditioned for epoch-second times.
class PolynomialFit {
 public:
  PolynomialFit() = default;

  /// Fit of degree `degree` (lowered automatically if the design is rank
  /// deficient; see reduced()). Empty weights means unit weights.
  PolynomialFit(std::span<const double> times, std::span<const double> values, int degree,
                std::span<const double> weights = {}) {
    if (times.size() != values.size() || times.empty()) {
      throw invalid_input("PolynomialFit: times and values must be nonempty and equal length");
    }
    const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
    center_ = 0.5 * (*lo + *hi);
    half_span_ = 0.5 * (*hi - *lo);
    if (!(half_span_ > 0.0)) half_span_ = 1.0;
    requested_ = degree;
    const std::size_t n = times.size();
    degree = std::min<int>(degree, static_cast<int>(n) - 1);
    for (; degree >= 0; --degree) {
      Eigen::MatrixXd p = design(times, degree);
      Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(values.data(), n);
      if (!weights.empty()) {
        const Eigen::VectorXd sw =
            Eigen::Map<const Eigen::VectorXd>(weights.data(), n).array().sqrt();
        p = sw.asDiagonal() * p;
        y = sw.asDiagonal() * y;
      }
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(p);
      qr.setThreshold(1e-10);
      if (qr.rank() == degree + 1) {
        coefficients_ = qr.solve(y);
        degree_ = degree;
        return;
      }
    }
    throw numerical_failure("PolynomialFit: design matrix has no usable rank");
  }

  int degree() const { return degree_; }
  /// True when the requested degree had to be lowered.
  bool reduced() const { return degree_ < requested_; }

  double operator()(double t, int derivative = 0) const {
    const double s = (t - center_) / half_span_;
    double out = 0.0;
    for (int j = degree_; j >= derivative; --j) {
      double c = coefficients_(j);
      for (int d = 0; d < derivative; ++d) c *= static_cast<double>(j - d);
      out = out * s + c;
    }
    return out / std::pow(half_span_, derivative);
  }

  std::vector<double> evaluate(std::span<const double> times, int derivative = 0) const {
    std::vector<double> out(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) out[i] = (*this)(times[i], derivative);
    return out;
  }

  Eigen::MatrixXd design(std::span<const double> times, int degree) const {
    Eigen::MatrixXd p(times.size(), degree + 1);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double s = (times[i] - center_) / half_span_;
      double v = 1.0;
      for (int j = 0; j <= degree; ++j) {
        p(i, j) = v;
        v *= s;
      }
    }
    return p;
  }

  /// Hat matrix P (P^T W P)^{-1} P^T W mapping observations to fitted values.
  Eigen::MatrixXd hat_matrix(std::span<const double> times, std::span<const double> weights = {}) const {
    const Eigen::MatrixXd p = design(times, degree_);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(times.size());
    if (!weights.empty()) w = Eigen::Map<const Eigen::VectorXd>(weights.data(), times.size());
    const Eigen::MatrixXd ptw = p.transpose() * w.asDiagonal();
    const Eigen::MatrixXd normal = ptw * p;
    return p * normal.ldlt().solve(ptw);
  }

 private:
  double center_ = 0.0;
  double half_span_ = 1.0;
  int requested_ = 0;
  int degree_ = 0;
  Eigen::VectorXd coefficients_;
};

}  // namespace tspline

#endif  // TSPLINE_POLYNOMIAL_HPP
