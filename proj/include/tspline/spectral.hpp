#ifndef TSPLINE_SPECTRAL_HPP
#define TSPLINE_SPECTRAL_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include <fftw3.h>

#include "tspline/error.hpp"
#include "tspline/polynomial.hpp"

namespace tspline {

namespace detail {

// FFTW's planner is not reentrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Non-redundant half (n/2 + 1 bins) of the DFT of a real series.
inline std::vector<std::complex<double>> real_dft(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(x.size() / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

/// Real series of length n from its non-redundant half spectrum (unnormalized).
inline std::vector<double> inverse_real_dft(std::vector<std::complex<double>> half, std::size_t n) {
  std::vector<double> out(n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(half.data()),
                                out.data(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

inline double uniform_interval(std::span<const double> times) {
  if (times.size() < 2) throw insufficient_data("spectral: need at least two samples");
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (std::abs((times[i] - times[i - 1]) - dt) > 1e-6 * dt) {
      throw invalid_input("spectral: samples must be uniformly spaced");
    }
  }
  return dt;
}

}  // namespace detail

/// Two-sided periodogram S(f_k) = (Delta / N) |DFT_k|^2 at f_k = k / (N Delta).
struct Spectrum {
  std::vector<double> freqs;
  std::vector<double> power;
  int derivative_order = 0;
  double interval = 1.0;

  std::size_t size() const { return power.size(); }

  /// |f| of bin k, folding bins above N/2 onto negative frequencies.
  double abs_frequency(std::size_t k) const {
    const std::size_t n = power.size();
    return static_cast<double>(std::min(k, n - k)) / (static_cast<double>(n) * interval);
  }

  /// Mean square recovered by Plancherel: sum S(f_k) / (N Delta).
  double total_variance() const {
    double s = 0.0;
    for (double p : power) s += p;
    return s / (static_cast<double>(power.size()) * interval);
  }

  void write_csv(std::ostream& os) const {
    os << "freq,power\n";
    os.precision(17);
    for (std::size_t k = 0; k < power.size(); ++k) os << freqs[k] << ',' << power[k] << '\n';
  }
};

/// Raw (untapered) periodogram of a uniformly sampled series.
inline Spectrum periodogram(std::span<const double> values, double interval) {
  if (values.size() < 2) throw insufficient_data("periodogram: need at least two samples");
  if (!(interval > 0.0)) throw invalid_input("periodogram: interval must be positive");
  const std::size_t n = values.size();
  const auto half = detail::real_dft(values);
  Spectrum s;
  s.interval = interval;
  s.freqs.resize(n);
  s.power.resize(n);
  const double scale = interval / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = k <= n / 2 ? k : n - k;  // conjugate symmetry
    s.freqs[k] = static_cast<double>(k) / (static_cast<double>(n) * interval);
    s.power[k] = scale * std::norm(half[j]);
  }
  return s;
}

inline Spectrum periodogram(std::span<const double> times, std::span<const double> values) {
  return periodogram(values, detail::uniform_interval(times));
}

/// Spectrum of the m-th derivative: (2 pi |f|)^{2m} S(f).
inline Spectrum derivative_spectrum(const Spectrum& s, int m) {
  Spectrum d = s;
  d.derivative_order = s.derivative_order + m;
  for (std::size_t k = 0; k < s.size(); ++k) {
    d.power[k] *= std::pow(2.0 * std::numbers::pi * s.abs_frequency(k), 2 * m);
  }
  return d;
}

struct RmsEstimate {
  double value = 0.0;
  bool signal_below_noise = false;
};

/// Remove the degree-m least-squares polynomial and, for m >= 1, the line
/// through the end points so the periodic extension has no jump.
inline std::vector<double> detrend(std::span<const double> values, double interval, int m) {
  const std::size_t n = values.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) * interval;
  const PolynomialFit poly(t, values, m);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = values[i] - poly(t[i]);
  if (m >= 1 && n > 1) {
    const double a = out.front();
    const double b = out.back();
    for (std::size_t i = 0; i < n; ++i) {
      out[i] -= a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
  }
  return out;
}

/// RMS of the m-th derivative of the signal underlying noisy samples: sums
/// derivative-spectrum bins that exceed q times the white-noise derivative
/// spectrum sigma^2 Delta (2 pi f)^{2m}.
inline RmsEstimate estimate_rms_derivative(std::span<const double> values, double interval,
                                           double sigma, int m, double q = 20.0) {
  if (m < 0) throw invalid_input("estimate_rms_derivative: derivative order must be >= 0");
  if (values.size() < static_cast<std::size_t>(m) + 3) {
    throw insufficient_data("estimate_rms_derivative: series too short for the detrend");
  }
  const auto x = detrend(values, interval, m);
  const Spectrum s = periodogram(x, interval);
  const double n = static_cast<double>(s.size());
  double total = 0.0;
  bool any = false;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double w = std::pow(2.0 * std::numbers::pi * s.abs_frequency(k), 2 * m);
    const double signal = w * s.power[k];
    const double noise = sigma * sigma * interval * w;
    if (signal > q * noise) {
      total += signal;
      any = true;
    }
  }
  RmsEstimate r;
  r.value = any ? std::sqrt(total / (n * interval)) : 0.0;
  r.signal_below_noise = !any;
  return r;
}

inline RmsEstimate estimate_rms_derivative(std::span<const double> times,
                                           std::span<const double> values, double sigma, int m,
                                           double q = 20.0) {
  return estimate_rms_derivative(values, detail::uniform_interval(times), sigma, m, q);
}

struct Coherence {
  std::vector<double> freqs;   // one-sided, 0 .. Nyquist
  std::vector<double> values;  // magnitude-squared coherence in [0, 1]
  int bands = 0;

  /// First frequency above zero where coherence drops below `level`; the
  /// crossing is interpolated linearly between bins. Returns the last
  /// frequency if it never drops.
  double crossing(double level = 0.5) const {
    for (std::size_t k = 1; k < values.size(); ++k) {
      if (values[k] < level) {
        const double c0 = values[k - 1], c1 = values[k];
        const double frac = c0 > c1 ? (c0 - level) / (c0 - c1) : 0.0;
        return freqs[k - 1] + std::clamp(frac, 0.0, 1.0) * (freqs[k] - freqs[k - 1]);
      }
    }
    return freqs.back();
  }
};

/// Magnitude-squared coherence averaged over `bands` non-overlapping
/// Hann-windowed segments (Welch). Raw single-segment coherence is
/// identically one, hence the minimum of two bands.
inline Coherence coherence(std::span<const double> a, std::span<const double> b, double interval,
                           int bands = 8) {
  if (a.size() != b.size()) throw invalid_input("coherence: series lengths differ");
  if (bands < 2) throw invalid_input("coherence: need at least two bands");
  const std::size_t len = a.size() / static_cast<std::size_t>(bands);
  if (len < 4) throw insufficient_data("coherence: segments too short");
  const std::size_t nf = len / 2 + 1;
  std::vector<double> saa(nf, 0.0), sbb(nf, 0.0);
  std::vector<std::complex<double>> sab(nf, 0.0);
  std::vector<double> window(len);
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) /
                                      static_cast<double>(len));
  }
  std::vector<double> sa(len), sb(len);
  for (int seg = 0; seg < bands; ++seg) {
    const std::size_t off = static_cast<std::size_t>(seg) * len;
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      ma += a[off + i];
      mb += b[off + i];
    }
    ma /= static_cast<double>(len);
    mb /= static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) {
      sa[i] = (a[off + i] - ma) * window[i];
      sb[i] = (b[off + i] - mb) * window[i];
    }
    const auto fa = detail::real_dft(sa);
    const auto fb = detail::real_dft(sb);
    for (std::size_t k = 0; k < nf; ++k) {
      saa[k] += std::norm(fa[k]);
      sbb[k] += std::norm(fb[k]);
      sab[k] += fa[k] * std::conj(fb[k]);
    }
  }
  Coherence c;
  c.bands = bands;
  c.freqs.resize(nf);
  c.values.resize(nf);
  for (std::size_t k = 0; k < nf; ++k) {
    c.freqs[k] = static_cast<double>(k) / (static_cast<double>(len) * interval);
    const double den = saa[k] * sbb[k];
    c.values[k] = den > 0.0 ? std::clamp(std::norm(sab[k]) / den, 0.0, 1.0) : 0.0;
  }
  return c;
}

}  // namespace tspline

#endif  // TSPLINE_SPECTRAL_HPP
