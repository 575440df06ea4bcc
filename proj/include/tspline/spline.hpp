#ifndef TSPLINE_SPLINE_HPP
#define TSPLINE_SPLINE_HPP

#include <algorithm>
#include <span>
#include <vector>

#include "tspline/banded.hpp"
#include "tspline/basis.hpp"
#include "tspline/error.hpp"

namespace tspline {

/// x(t) = sum_m xi_m X^K_m(t). Immutable once built.
class Spline {
 public:
  Spline(KnotVector knots, std::vector<double> coefficients)
      : knots_(std::move(knots)), coefficients_(std::move(coefficients)) {
    if (coefficients_.size() != knots_.basis_count()) {
      throw invalid_input("Spline: coefficient count must equal the number of basis functions");
    }
  }

  const KnotVector& knots() const { return knots_; }
  std::span<const double> coefficients() const { return coefficients_; }
  int order() const { return knots_.order(); }

  double operator()(double t, int derivative = 0) const {
    const std::size_t mu = knots_.span(t);
    const auto w = basis_window(knots_, mu, t, derivative);
    const std::size_t first = mu + 1 - static_cast<std::size_t>(order());
    double s = 0.0;
    for (int r = 0; r < order(); ++r) s += w[r] * coefficients_[first + r];
    return s;
  }

  std::vector<double> evaluate(std::span<const double> times, int derivative = 0) const {
    std::vector<double> out(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) out[i] = (*this)(times[i], derivative);
    return out;
  }

 private:
  KnotVector knots_;
  std::vector<double> coefficients_;
};

/// Solve the square collocation system X xi = values for any knot vector
/// with exactly times.size() basis functions.
inline std::vector<double> collocation_solve(const BasisMatrix& x, std::span<const double> values) {
  const std::size_t n = x.rows();
  if (x.cols() != n) throw invalid_input("collocation_solve: basis matrix must be square");
  std::size_t lower = 0, upper = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = x.start(i);
    const std::size_t e = s + static_cast<std::size_t>(x.order()) - 1;
    if (s < i) lower = std::max(lower, i - s);
    if (e > i) upper = std::max(upper, std::min(e, n - 1) - i);
  }
  BandedLU lu(n, lower, upper);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    for (int r = 0; r < x.order(); ++r) {
      const std::size_t j = x.start(i) + r;
      if (row[r] != 0.0) lu.at(i, j) = row[r];
    }
  }
  lu.factor();
  return lu.solve(values);
}

/// Canonical interpolating spline of order K through (times, values).
inline Spline interpolating_spline(std::span<const double> times, std::span<const double> values,
                                   int order) {
  if (times.size() != values.size()) {
    throw invalid_input("interpolating_spline: times and values differ in length");
  }
  KnotVector kv = interpolation_knots(times, order);
  const BasisMatrix x = evaluate_basis(kv, times, 0);
  auto xi = collocation_solve(x, values);
  return Spline(std::move(kv), std::move(xi));
}

}  // namespace tspline

#endif  // TSPLINE_SPLINE_HPP
