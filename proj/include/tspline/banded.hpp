#ifndef TSPLINE_BANDED_HPP
#define TSPLINE_BANDED_HPP

// Banded linear algebra used by the spline solves. The smoothing systems
// X^T W X + lambda G are symmetric positive definite with half-bandwidth K-1
// and are solved through a QR factorization of the stacked rows, and the square collocation systems of the interpolating spline are totally
// positive, so Gaussian elimination without pivoting is stable for them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tspline/error.hpp"

namespace tspline {

/// Symmetric band matrix stored by its lower band.
class BandedSymmetric {
 public:
  BandedSymmetric() = default;
  BandedSymmetric(std::size_t n, std::size_t bandwidth)
      : n_(n), p_(bandwidth), data_(n * (bandwidth + 1), 0.0) {}

  std::size_t size() const { return n_; }
  std::size_t bandwidth() const { return p_; }

  bool in_band(std::size_t i, std::size_t j) const {
    return (i > j ? i - j : j - i) <= p_;
  }

  double operator()(std::size_t i, std::size_t j) const {
    if (i < j) std::swap(i, j);
    if (i - j > p_) return 0.0;
    return data_[i * (p_ + 1) + (i - j)];
  }

  /// Mutable access; (i, j) and (j, i) share storage.
  double& at(std::size_t i, std::size_t j) {
    if (i < j) std::swap(i, j);
    return data_[i * (p_ + 1) + (i - j)];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// this += scale * other (same shape).
  void add_scaled(const BandedSymmetric& other, double scale) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += scale * other.data_[k];
  }

  std::vector<double> multiply(std::span<const double> v) const {
    std::vector<double> out(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t lo = i > p_ ? i - p_ : 0;
      for (std::size_t j = lo; j < i; ++j) {
        const double a = data_[i * (p_ + 1) + (i - j)];
        out[i] += a * v[j];
        out[j] += a * v[i];
      }
      out[i] += data_[i * (p_ + 1)] * v[i];
    }
    return out;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_, n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t lo = i > p_ ? i - p_ : 0;
      for (std::size_t j = lo; j <= i; ++j) {
        m(i, j) = m(j, i) = (*this)(i, j);
      }
    }
    return m;
  }

 private:
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::vector<double> data_;
};

/// LDL^T factorization of a symmetric positive definite band matrix.
class BandedLDLT {
 public:
  BandedLDLT() = default;
  explicit BandedLDLT(BandedSymmetric factor, std::nullptr_t) : f_(std::move(factor)) {}

  explicit BandedLDLT(const BandedSymmetric& a) : f_(a) {
    const std::size_t n = f_.size();
    const std::size_t p = f_.bandwidth();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
    const double tiny = std::max(max_diag, 1e-300) * 1e-14;

    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t lo_j = j > p ? j - p : 0;
      double d = f_(j, j);
      for (std::size_t k = lo_j; k < j; ++k) {
        const double l = f_(j, k);
        d -= l * l * f_(k, k);
      }
      if (!(d > tiny)) {
        throw numerical_failure("banded LDL^T: matrix is singular or not positive definite");
      }
      f_.at(j, j) = d;
      const std::size_t hi = std::min(n - 1, j + p);
      for (std::size_t i = j + 1; i <= hi; ++i) {
        const std::size_t lo_i = i > p ? i - p : 0;
        double s = f_(i, j);
        for (std::size_t k = std::max(lo_i, lo_j); k < j; ++k) {
          s -= f_(i, k) * f_(j, k) * f_(k, k);
        }
        f_.at(i, j) = s / d;
      }
    }
  }

  std::size_t size() const { return f_.size(); }

  std::vector<double> solve(std::span<const double> b) const {
    const std::size_t n = f_.size();
    const std::size_t p = f_.bandwidth();
    std::vector<double> x(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i > p ? i - p : 0;
      for (std::size_t k = lo; k < i; ++k) x[i] -= f_(i, k) * x[k];
    }
    for (std::size_t i = 0; i < n; ++i) x[i] /= f_(i, i);
    for (std::size_t i = n; i-- > 0;) {
      const std::size_t hi = std::min(n - 1, i + p);
      for (std::size_t k = i + 1; k <= hi; ++k) x[i] -= f_(k, i) * x[k];
    }
    return x;
  }

  /// Entries of A^{-1} inside the band of A (selected inversion, O(n p^2)).
  BandedSymmetric inverse_band() const {
    const std::size_t n = f_.size();
    const std::size_t p = f_.bandwidth();
    BandedSymmetric z(n, p);
    for (std::size_t i = n; i-- > 0;) {
      const std::size_t hi = std::min(n - 1, i + p);
      for (std::size_t j = hi + 1; j-- > i;) {
        double s = (i == j) ? 1.0 / f_(i, i) : 0.0;
        for (std::size_t k = i + 1; k <= hi; ++k) s -= f_(k, i) * z(k, j);
        z.at(i, j) = s;
      }
    }
    return z;
  }

 private:
  BandedSymmetric f_;  // unit-lower L below the diagonal, D on the diagonal
};

/// Weighted least squares min sum_i w_i (a_i x - b_i)^2 for a tall matrix
/// whose rows each touch at most p+1 consecutive columns. Rows are rotated in
/// one at a time with square-root-free Givens updates, which keep A^T W A in
/// the factored form U^T D U (U unit upper banded) without ever forming it.
/// Rows must arrive in nondecreasing order of their first column, which keeps
/// every update inside the band.
class BandedQR {
 public:
  BandedQR(std::size_t n, std::size_t bandwidth)
      : n_(n), p_(bandwidth), d_(n, 0.0), u_(n * (bandwidth + 1), 0.0), theta_(n, 0.0) {}

  BandedQR() : BandedQR(0, 0) {}

  std::size_t size() const { return n_; }

  /// Empties the accumulator, keeping its storage.
  void reset(std::size_t n, std::size_t bandwidth) {
    n_ = n;
    p_ = bandwidth;
    d_.assign(n, 0.0);
    u_.assign(n * (bandwidth + 1), 0.0);
    theta_.assign(n, 0.0);
    last_start_ = 0;
  }

  /// Adds the row with entries `values` starting at column `start`.
  void add_row(std::size_t start, std::span<const double> values, double rhs, double weight = 1.0) {
    if (values.size() > p_ + 1 || start + values.size() > n_) {
      throw invalid_input("BandedQR: row exceeds the band");
    }
    if (start < last_start_) throw invalid_input("BandedQR: rows must be sorted by first column");
    if (!(weight >= 0.0)) throw invalid_input("BandedQR: weights must be nonnegative");
    last_start_ = start;
    switch (p_) {
      case 0: return rotate_in<1>(start, values, rhs, weight);
      case 1: return rotate_in<2>(start, values, rhs, weight);
      case 2: return rotate_in<3>(start, values, rhs, weight);
      case 3: return rotate_in<4>(start, values, rhs, weight);
      case 4: return rotate_in<5>(start, values, rhs, weight);
      case 5: return rotate_in<6>(start, values, rhs, weight);
      default: throw invalid_input("BandedQR: bandwidth too large");
    }
  }

  void check_rank() const {
    const double big = *std::max_element(d_.begin(), d_.end());
    for (double d : d_) {
      if (!(d > 1e-30 * big)) throw numerical_failure("banded QR: least-squares system is rank deficient");
    }
  }

  /// Solution of the accumulated least-squares problem.
  std::vector<double> solve() const {
    check_rank();
    const std::size_t w = p_ + 1;
    std::vector<double> x(theta_);
    for (std::size_t i = n_; i-- > 0;) {
      const std::size_t hi = std::min(n_ - 1, i + p_);
      for (std::size_t k = i + 1; k <= hi; ++k) x[i] -= u_[i * w + (k - i)] * x[k];
    }
    return x;
  }

  /// LDL^T factor of A^T W A: D = d, L = U^T.
  BandedLDLT ldlt() const {
    check_rank();
    const std::size_t w = p_ + 1;
    BandedSymmetric f(n_, p_);
    for (std::size_t j = 0; j < n_; ++j) {
      f.at(j, j) = d_[j];
      for (std::size_t k = 1; k <= p_ && j + k < n_; ++k) f.at(j + k, j) = u_[j * w + k];
    }
    return BandedLDLT(std::move(f), nullptr);
  }

 private:
  // Since rows arrive sorted, rows of U at or after `start` are zero beyond
  // column start + p, so the incoming row never grows past its own window.
  template <std::size_t W>
  void rotate_in(std::size_t start, std::span<const double> values, double b, double weight) {
    std::array<double, W> v{};
    std::copy(values.begin(), values.end(), v.begin());
    const std::size_t count = std::min(W, n_ - start);
    for (std::size_t o = 0; o < count && weight != 0.0; ++o) {
      const double a = v[o];
      if (a == 0.0) continue;
      const std::size_t j = start + o;
      const double dj = d_[j];
      const double dp = dj + weight * a * a;
      const double cbar = dj / dp, sbar = weight * a / dp;
      weight *= cbar;
      d_[j] = dp;
      double* u = &u_[j * W];
      for (std::size_t k = o + 1; k < W; ++k) {
        const double vk = v[k];
        v[k] = vk - a * u[k - o];
        u[k - o] = cbar * u[k - o] + sbar * vk;
      }
      const double t = theta_[j];
      theta_[j] = cbar * t + sbar * b;
      b -= a * t;
    }
  }

  std::size_t n_;
  std::size_t p_;
  std::vector<double> d_;
  std::vector<double> u_;  // U(j, j + k) at j * (p + 1) + k
  std::vector<double> theta_;
  std::size_t last_start_ = 0;
};

/// General band matrix with `lower` sub- and `upper` super-diagonals,
/// factored in place by Gaussian elimination without pivoting.
class BandedLU {
 public:
  BandedLU(std::size_t n, std::size_t lower, std::size_t upper)
      : n_(n), kl_(lower), ku_(upper), width_(lower + upper + 1), data_(n * width_, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return data_[i * width_ + (j + kl_ - i)]; }
  double get(std::size_t i, std::size_t j) const {
    if (j + kl_ < i || j > i + ku_) return 0.0;
    return data_[i * width_ + (j + kl_ - i)];
  }

  void factor() {
    for (std::size_t k = 0; k < n_; ++k) {
      const double pivot = get(k, k);
      if (!(std::abs(pivot) > 1e-300)) {
        throw numerical_failure("banded LU: zero pivot in collocation matrix");
      }
      const std::size_t i_hi = std::min(n_ - 1, k + kl_);
      const std::size_t j_hi = std::min(n_ - 1, k + ku_);
      for (std::size_t i = k + 1; i <= i_hi; ++i) {
        const double factor = get(i, k) / pivot;
        if (factor == 0.0) continue;
        at(i, k) = factor;
        for (std::size_t j = k + 1; j <= j_hi; ++j) at(i, j) -= factor * get(k, j);
      }
    }
    factored_ = true;
  }

  std::vector<double> solve(std::span<const double> b) const {
    if (!factored_) throw numerical_failure("banded LU: solve before factor");
    std::vector<double> x(b.begin(), b.end());
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t lo = i > kl_ ? i - kl_ : 0;
      for (std::size_t k = lo; k < i; ++k) x[i] -= get(i, k) * x[k];
    }
    for (std::size_t i = n_; i-- > 0;) {
      const std::size_t hi = std::min(n_ - 1, i + ku_);
      for (std::size_t k = i + 1; k <= hi; ++k) x[i] -= get(i, k) * x[k];
      x[i] /= get(i, i);
    }
    return x;
  }

 private:
  std::size_t n_, kl_, ku_, width_;
  std::vector<double> data_;
  bool factored_ = false;
};

}  // namespace tspline

#endif  // TSPLINE_BANDED_HPP
