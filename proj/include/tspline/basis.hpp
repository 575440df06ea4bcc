#ifndef TSPLINE_BASIS_HPP
#define TSPLINE_BASIS_HPP

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tspline/error.hpp"

namespace tspline {

/// Largest supported spline order K (degree K-1).
inline constexpr int max_order = 6;

namespace detail {

inline void require_strictly_increasing(std::span<const double> times, const char* what) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw invalid_input(std::string(what) + ": times must be strictly increasing");
    }
  }
}

}  // namespace detail

/// Nondecreasing knot sequence together with the spline order K it serves.
/// The basis has knots().size() - order() functions and is supported on
/// [knots[K-1], knots[M]], which for clamped knots is [front(), back()].
class KnotVector {
 public:
  KnotVector(std::vector<double> knots, int order) : knots_(std::move(knots)), order_(order) {
    if (order_ < 1 || order_ > max_order) {
      throw invalid_input("KnotVector: order must lie in 1.." + std::to_string(max_order));
    }
    if (knots_.size() < static_cast<std::size_t>(order_) + 1) {
      throw insufficient_data("KnotVector: need at least K+1 knots");
    }
    std::size_t run = 1;
    for (std::size_t i = 1; i < knots_.size(); ++i) {
      if (knots_[i] < knots_[i - 1]) throw invalid_input("KnotVector: knots must be nondecreasing");
      run = knots_[i] == knots_[i - 1] ? run + 1 : 1;
      if (run > static_cast<std::size_t>(order_)) {
        throw invalid_input("KnotVector: knot multiplicity exceeds the order");
      }
    }
    if (!(domain_end() > domain_begin())) throw invalid_input("KnotVector: empty support");
  }

  std::span<const double> knots() const { return knots_; }
  int order() const { return order_; }
  std::size_t basis_count() const { return knots_.size() - static_cast<std::size_t>(order_); }
  double front() const { return knots_.front(); }
  double back() const { return knots_.back(); }
  double domain_begin() const { return knots_[order_ - 1]; }
  double domain_end() const { return knots_[basis_count()]; }

  /// Index mu with knots[mu] <= t < knots[mu+1]; the right end of the domain
  /// belongs to the last nonempty interval.
  std::size_t span(double t) const {
    const std::size_t m = basis_count();
    const std::size_t k = static_cast<std::size_t>(order_);
    if (t < domain_begin() || t > domain_end() || t != t) {
      throw out_of_range("B-spline evaluation at t=" + std::to_string(t) +
                         " outside the knot support");
    }
    auto it = std::upper_bound(knots_.begin() + (k - 1), knots_.begin() + m + 1, t);
    std::size_t mu = static_cast<std::size_t>(it - knots_.begin()) - 1;
    if (mu >= m) {
      mu = m - 1;
      while (knots_[mu] == knots_[mu + 1]) --mu;
    }
    return mu;
  }

 private:
  std::vector<double> knots_;
  int order_;
};

/// Knots of the canonical interpolating spline of order K through `times`:
/// K copies of each endpoint, interior knots on observations (even K) or on
/// midpoints between observations (odd K). Length N + K.
inline KnotVector interpolation_knots(std::span<const double> times, int order) {
  if (order < 1 || order > max_order) {
    throw invalid_input("interpolation_knots: order must lie in 1.." + std::to_string(max_order));
  }
  detail::require_strictly_increasing(times, "interpolation_knots");
  const std::size_t n = times.size();
  const std::size_t k = static_cast<std::size_t>(order);
  if (n < k) throw insufficient_data("interpolation_knots: need at least K observations");

  std::vector<double> knots(n + k);
  // 1-based m in the textbook formulas maps to knots[m-1].
  for (std::size_t m = 1; m <= n + k; ++m) {
    double value;
    if (m <= k) {
      value = times.front();
    } else if (m > n) {
      value = times.back();
    } else if (k % 2 == 0) {
      value = times[m - k / 2 - 1];
    } else {
      const std::size_t j = m - (k + 1) / 2;  // t_j and t_{j+1}, 1-based
      value = times[j - 1] + 0.5 * (times[j] - times[j - 1]);
    }
    knots[m - 1] = value;
  }
  return KnotVector(std::move(knots), order);
}

/// Nonzero values of the order-`order` B-splines (or their `derivative`-th
/// derivatives) at t, for basis indices span-order+1 .. span.
inline std::array<double, max_order> basis_window(const KnotVector& kv, std::size_t mu, double t,
                                                   int derivative) {
  const std::span<const double> tau = kv.knots();
  const int k = kv.order();
  std::array<double, max_order> out{};
  if (derivative >= k) return out;

  // Values of order k - derivative (Cox-de Boor triangle), aligned so that
  // out[r] belongs to basis index mu - (k - 1) + r.
  const int k0 = k - derivative;
  std::array<double, max_order> b{};
  std::array<double, max_order> left{};
  std::array<double, max_order> right{};
  b[0] = 1.0;
  for (int j = 1; j < k0; ++j) {
    left[j] = t - tau[mu + 1 - j];
    right[j] = tau[mu + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double term = b[r] / (right[r + 1] + left[j - r]);
      b[r] = saved + right[r + 1] * term;
      saved = left[j - r] * term;
    }
    b[j] = saved;
  }

  // Raise the order one step at a time with the derivative recurrence
  // D B_{m,q} = (q-1) [B_{m,q-1} / (tau_{m+q-1} - tau_m) - B_{m+1,q-1} / (tau_{m+q} - tau_{m+1})].
  for (int q = k0 + 1; q <= k; ++q) {
    // b holds q-1 values for indices mu-q+2 .. mu; build q values for mu-q+1 .. mu.
    std::array<double, max_order> next{};
    for (int r = 0; r < q; ++r) {
      const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(mu) - (q - 1) + r;
      const double lower = (r - 1 >= 0) ? b[r - 1] : 0.0;  // B_{m,q-1}
      const double upper = (r < q - 1) ? b[r] : 0.0;       // B_{m+1,q-1}
      double v = 0.0;
      const double d1 = tau[m + q - 1] - tau[m];
      const double d2 = tau[m + q] - tau[m + 1];
      if (lower != 0.0 && d1 > 0.0) v += lower / d1;
      if (upper != 0.0 && d2 > 0.0) v -= upper / d2;
      next[r] = (q - 1) * v;
    }
    b = next;
  }
  // b now holds k values for indices mu-k+1 .. mu.
  for (int r = 0; r < k; ++r) out[r] = b[r];
  return out;
}

/// Sparse N_eval x M matrix of B-spline values; each row stores the K
/// consecutive entries starting at column start(i).
class BasisMatrix {
 public:
  BasisMatrix(std::vector<double> eval_times, int derivative, std::size_t columns, int order)
      : eval_times_(std::move(eval_times)),
        derivative_(derivative),
        columns_(columns),
        order_(order),
        start_(eval_times_.size(), 0),
        values_(eval_times_.size() * static_cast<std::size_t>(order), 0.0) {}

  std::size_t rows() const { return eval_times_.size(); }
  std::size_t cols() const { return columns_; }
  int order() const { return order_; }
  int derivative_order() const { return derivative_; }
  std::span<const double> eval_times() const { return eval_times_; }

  std::size_t start(std::size_t row) const { return start_[row]; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * order_, static_cast<std::size_t>(order_)};
  }

  double operator()(std::size_t i, std::size_t j) const {
    if (j < start_[i] || j >= start_[i] + order_) return 0.0;
    return values_[i * order_ + (j - start_[i])];
  }

  /// X * coefficients.
  std::vector<double> apply(std::span<const double> coefficients) const {
    std::vector<double> out(rows(), 0.0);
    for (std::size_t i = 0; i < rows(); ++i) {
      double s = 0.0;
      for (int r = 0; r < order_; ++r) s += values_[i * order_ + r] * coefficients[start_[i] + r];
      out[i] = s;
    }
    return out;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows(), cols());
    for (std::size_t i = 0; i < rows(); ++i) {
      for (int r = 0; r < order_; ++r) m(i, start_[i] + r) = values_[i * order_ + r];
    }
    return m;
  }

 private:
  friend BasisMatrix evaluate_basis(const KnotVector&, std::span<const double>, int);

  std::vector<double> eval_times_;
  int derivative_;
  std::size_t columns_;
  int order_;
  std::vector<std::size_t> start_;
  std::vector<double> values_;
};

/// Evaluate every basis function (d-th derivative) at each of `eval_times`.
/// A derivative order of K or more yields an all-zero matrix.
inline BasisMatrix evaluate_basis(const KnotVector& kv, std::span<const double> eval_times,
                                  int derivative = 0) {
  if (derivative < 0) throw invalid_input("evaluate_basis: negative derivative order");
  const int k = kv.order();
  BasisMatrix bm(std::vector<double>(eval_times.begin(), eval_times.end()), derivative,
                 kv.basis_count(), k);
  for (std::size_t i = 0; i < eval_times.size(); ++i) {
    const std::size_t mu = kv.span(eval_times[i]);
    bm.start_[i] = mu + 1 - static_cast<std::size_t>(k);
    const auto w = basis_window(kv, mu, eval_times[i], derivative);
    std::copy_n(w.begin(), k, bm.values_.begin() + i * k);
  }
  return bm;
}

}  // namespace tspline

#endif  // TSPLINE_BASIS_HPP
