#ifndef TSPLINE_SYNTHETIC_HPP
#define TSPLINE_SYNTHETIC_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "tspline/distributions.hpp"
#include "tspline/error.hpp"
#include "tspline/spectral.hpp"
#include "tspline/track.hpp"

namespace tspline {

/// SplitMix64 finalizer, used to derive independent per-run seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class... Rest>
std::uint64_t mix_seed(std::uint64_t x, std::uint64_t y, Rest... rest) {
  return mix_seed(mix_seed(x) ^ (y + 0x632be59bd9b4e019ULL), static_cast<std::uint64_t>(rest)...);
}

/// Matérn velocity process, S(omega) = A^2 / (omega^2 + damping^2)^(slope/2),
/// with A chosen so that the expected mean square velocity is u_rms^2.
struct MaternSpec {
  double u_rms = 0.2;
  double damping = 1.0 / 1800.0;
  double slope = 2.0;
  std::size_t n = 1000;
  double dt = 60.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(slope > 1.0)) throw invalid_input("MaternSpec: slope must exceed 1");
    if (!(u_rms > 0.0)) throw invalid_input("MaternSpec: u_rms must be positive");
    if (!(damping > 0.0) || !(dt > 0.0)) throw invalid_input("MaternSpec: damping and dt must be positive");
    if (n < 2) throw invalid_input("MaternSpec: need at least two samples");
  }

  double shape(double f) const {
    const double w = 2.0 * std::numbers::pi * f;
    return std::pow(w * w + damping * damping, -0.5 * slope);
  }

  /// Squared amplitude A^2 for the synthesis grid of length 2n.
  double amplitude_squared() const {
    const std::size_t len = 2 * n;
    double sum = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t j = std::min(k, len - k);
      sum += shape(static_cast<double>(j) / (static_cast<double>(len) * dt));
    }
    return u_rms * u_rms * static_cast<double>(len) / sum;
  }

  /// Two-sided spectral density (m^2/s^2 per Hz) of the generated velocity.
  double density(double f) const { return amplitude_squared() * dt * shape(f); }
};

/// One velocity component of length spec.n.
template <class Rng>
std::vector<double> matern_velocity(const MaternSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t len = 2 * spec.n;
  std::normal_distribution<double> normal;
  std::vector<double> white(len);
  for (double& w : white) w = normal(rng);
  auto half = detail::real_dft(white);
  const double a = std::sqrt(spec.amplitude_squared());
  for (std::size_t k = 0; k < half.size(); ++k) {
    half[k] *= a * std::sqrt(spec.shape(static_cast<double>(k) / (static_cast<double>(len) * spec.dt)));
  }
  auto v = detail::inverse_real_dft(std::move(half), len);
  v.resize(spec.n);
  for (double& x : v) x /= static_cast<double>(len);
  return v;
}

/// Cumulative trapezoid integral starting from zero.
inline std::vector<double> integrate_trapezoid(std::span<const double> v, double dt) {
  std::vector<double> x(v.size(), 0.0);
  for (std::size_t i = 1; i < v.size(); ++i) x[i] = x[i - 1] + 0.5 * dt * (v[i - 1] + v[i]);
  return x;
}

/// Noise-free bivariate track with independent Matérn velocity components.
inline TrackSeries matern_track(const MaternSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto u = matern_velocity(spec, rng);
  const auto v = matern_velocity(spec, rng);
  TrackSeries t;
  t.times.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) t.times[i] = static_cast<double>(i) * spec.dt;
  t.truth_x = integrate_trapezoid(u, spec.dt);
  t.truth_y = integrate_trapezoid(v, spec.dt);
  t.x = t.truth_x;
  t.y = t.truth_y;
  t.contaminated.assign(spec.n, 0);
  return t;
}

/// Adds noise to both axes. With probability alpha a point is an outlier and
/// both of its axes draw from `outlier` instead of `noise`.
inline TrackSeries contaminate(const TrackSeries& track, const NoiseModel& noise, double alpha,
                               const NoiseModel& outlier, std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw invalid_input("contaminate: alpha must lie in [0, 1)");
  track.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform;
  TrackSeries out = track;
  if (!out.has_truth()) {
    out.truth_x = track.x;
    out.truth_y = track.y;
  }
  out.contaminated.assign(track.size(), 0);
  for (std::size_t i = 0; i < track.size(); ++i) {
    const bool bad = alpha > 0.0 && uniform(rng) < alpha;
    const NoiseModel& m = bad ? outlier : noise;
    out.contaminated[i] = bad ? 1 : 0;
    out.x[i] = out.truth_x[i] + m.sample(rng);
    out.y[i] = out.truth_y[i] + m.sample(rng);
  }
  return out;
}

inline TrackSeries add_noise(const TrackSeries& track, const NoiseModel& noise, std::uint64_t seed) {
  return contaminate(track, noise, 0.0, noise, seed);
}

/// Every k-th sample, with the truth at the retained times.
inline TrackSeries stride(const TrackSeries& track, std::size_t k, int order = 4) {
  if (k < 1) throw invalid_input("stride: k must be >= 1");
  TrackSeries out;
  out.geographic = track.geographic;
  for (std::size_t i = 0; i < track.size(); i += k) {
    out.times.push_back(track.times[i]);
    out.x.push_back(track.x[i]);
    out.y.push_back(track.y[i]);
    if (track.has_truth()) {
      out.truth_x.push_back(track.truth_x[i]);
      out.truth_y.push_back(track.truth_y[i]);
    }
    if (!track.contaminated.empty()) out.contaminated.push_back(track.contaminated[i]);
  }
  if (out.size() < static_cast<std::size_t>(order) + 2) {
    throw insufficient_data("stride: fewer than K+2 samples remain");
  }
  return out;
}

}  // namespace tspline

#endif  // TSPLINE_SYNTHETIC_HPP
