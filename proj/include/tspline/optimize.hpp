#ifndef TSPLINE_OPTIMIZE_HPP
#define TSPLINE_OPTIMIZE_HPP

#include <cmath>
#include <functional>
#include <limits>

#include "tspline/error.hpp"

namespace tspline {

struct LogScaleMinimum {
  double argument;      // minimizing lambda (not its logarithm)
  double value;         // objective at `argument`
  bool bracketed;       // false when the search stopped at an expansion limit
  int evaluations;
};

/// Minimize objective(lambda) over log(lambda): geometric bracketing by
/// `factor` from `start`, then golden-section search to `log_tolerance`
/// (natural-log units).
inline LogScaleMinimum minimize_log_scale(const std::function<double(double)>& objective,
                                          double start, double log_tolerance = 1e-3,
                                          double factor = 10.0, int max_expansions = 30) {
  if (!(start > 0.0) || !std::isfinite(start)) {
    throw invalid_input("minimize_log_scale: start must be positive and finite");
  }
  int evaluations = 0;
  auto f = [&](double u) {
    ++evaluations;
    const double v = objective(std::exp(u));
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  const double h = std::log(factor);
  const double u0 = std::log(start);

  double a, b, c, fa, fb, fc;  // bracket a < b < c with f(b) <= f(a), f(c)
  b = u0;
  fb = f(b);
  c = u0 + h;
  fc = f(c);
  bool bracketed = true;
  if (fc < fb) {
    a = b;
    fa = fb;
    b = c;
    fb = fc;
    c = b + h;
    fc = f(c);
    int n = 0;
    while (fc < fb) {
      if (++n > max_expansions) {
        bracketed = false;
        break;
      }
      a = b;
      fa = fb;
      b = c;
      fb = fc;
      c = b + h;
      fc = f(c);
    }
    if (!bracketed) return {std::exp(c), fc, false, evaluations};
  } else {
    a = u0 - h;
    fa = f(a);
    int n = 0;
    while (fa < fb) {
      if (++n > max_expansions) {
        bracketed = false;
        break;
      }
      c = b;
      fc = fb;
      b = a;
      fb = fa;
      a = b - h;
      fa = f(a);
    }
    if (!bracketed) return {std::exp(a), fa, false, evaluations};
  }

  // Golden-section search on [a, c].
  const double g = 0.5 * (3.0 - std::sqrt(5.0));
  double x1 = a + g * (c - a);
  double x2 = c - g * (c - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (c - a > log_tolerance) {
    if (f1 <= f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = a + g * (c - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = c - g * (c - a);
      f2 = f(x2);
    }
  }
  double best_u = f1 <= f2 ? x1 : x2;
  double best_f = std::min(f1, f2);
  if (fb < best_f) {
    best_u = b;
    best_f = fb;
  }
  return {std::exp(best_u), best_f, bracketed, evaluations};
}

}  // namespace tspline

#endif  // TSPLINE_OPTIMIZE_HPP
