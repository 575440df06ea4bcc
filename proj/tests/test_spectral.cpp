#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "tspline/spectral.hpp"
#include "tspline/synthetic.hpp"

using namespace tspline;

TEST(Spectral, Plancherel) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(3, 2);
  for (std::size_t len : {64u, 101u, 1000u}) {
    std::vector<double> x(len);
    for (double& v : x) v = n(rng);
    double ms = 0.0;
    for (double v : x) ms += v * v;
    ms /= static_cast<double>(len);
    const auto s = periodogram(x, 2.5);
    EXPECT_NEAR(s.total_variance(), ms, 1e-10 * ms);
  }
}

TEST(Spectral, PureToneLandsInOneBinPair) {
  const std::size_t n = 128;
  const std::size_t bin = 9;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(2 * std::numbers::pi * bin * i / n);
  const auto s = periodogram(x, 1.0);
  double total = 0.0;
  for (double p : s.power) total += p;
  EXPECT_NEAR(s.power[bin] + s.power[n - bin], total, 1e-9 * total);
  EXPECT_NEAR(s.power[bin], s.power[n - bin], 1e-12);
  EXPECT_NEAR(s.freqs[bin], 9.0 / 128.0, 1e-15);
}

TEST(Spectral, WhiteNoiseIsFlat) {
  std::mt19937_64 rng(2);
  const double sigma = 3.0, dt = 30.0;
  std::normal_distribution<double> n(0, sigma);
  const std::size_t len = 256;
  std::vector<double> mean(len, 0.0);
  const int ens = 400;
  for (int e = 0; e < ens; ++e) {
    std::vector<double> x(len);
    for (double& v : x) v = n(rng);
    const auto s = periodogram(x, dt);
    for (std::size_t k = 0; k < len; ++k) mean[k] += s.power[k] / ens;
  }
  const double level = sigma * sigma * dt;
  double avg = 0.0;
  for (std::size_t k = 1; k < len; ++k) avg += mean[k] / (len - 1);
  EXPECT_NEAR(avg, level, 0.02 * level);
  for (std::size_t k = 1; k < len; ++k) EXPECT_NEAR(mean[k], level, 0.3 * level);
}

TEST(Spectral, DerivativeSpectrumWeights) {
  std::vector<double> x{1, 4, 2, 8, 5, 7, 1, 0};
  const auto s = periodogram(x, 2.0);
  const auto d = derivative_spectrum(s, 2);
  EXPECT_EQ(d.derivative_order, 2);
  for (std::size_t k = 0; k < s.size(); ++k) {
    EXPECT_NEAR(d.power[k], std::pow(2 * std::numbers::pi * s.abs_frequency(k), 4) * s.power[k], 1e-9);
  }
  EXPECT_DOUBLE_EQ(s.abs_frequency(7), s.abs_frequency(1));
}

TEST(Spectral, NoisyVelocityRms) {
  MaternSpec spec;
  spec.n = 2000;
  spec.dt = 30;
  double worst = 0.0;
  for (std::uint64_t e = 0; e < 5; ++e) {
    spec.seed = mix_seed(3, e);
    const auto t = matern_track(spec);
    std::vector<double> vel(t.size() - 1);
    double ms = 0.0;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      const double v = (t.truth_x[i + 1] - t.truth_x[i]) / spec.dt;
      ms += v * v;
    }
    const double sample = std::sqrt(ms / static_cast<double>(t.size() - 1));
    const auto est = estimate_rms_derivative(t.truth_x, spec.dt, 0.0, 1);
    EXPECT_FALSE(est.signal_below_noise);
    worst = std::max(worst, std::abs(est.value / sample - 1.0));
  }
  EXPECT_LT(worst, 0.15);
}

TEST(Spectral, PureNoiseHasNoSignal) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 10);
  std::vector<double> x(1000);
  for (double& v : x) v = n(rng);
  const auto est = estimate_rms_derivative(x, 1800.0, 10.0, 1);
  EXPECT_TRUE(est.signal_below_noise);
  EXPECT_EQ(est.value, 0.0);
  EXPECT_THROW(estimate_rms_derivative(std::vector<double>{1, 2}, 1.0, 1.0, 1), insufficient_data);
}

TEST(Spectral, DetrendRemovesPolynomial) {
  std::vector<double> x(50);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 2.0 + 0.5 * i - 0.01 * i * i;
  const auto r = detrend(x, 1.0, 2);
  for (double v : r) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(Coherence, IdenticalSeriesAreFullyCoherent) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<double> a(1024);
  for (double& v : a) v = n(rng);
  const auto c = coherence(a, a, 1.0, 8);
  for (std::size_t k = 1; k < c.values.size(); ++k) EXPECT_NEAR(c.values[k], 1.0, 1e-12);
}

TEST(Coherence, IndependentNoiseSitsAtTheBiasLevel) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  const int bands = 8;
  double mean = 0.0;
  int count = 0;
  for (int e = 0; e < 20; ++e) {
    std::vector<double> a(2048), b(2048);
    for (double& v : a) v = n(rng);
    for (double& v : b) v = n(rng);
    const auto c = coherence(a, b, 1.0, bands);
    for (std::size_t k = 1; k + 1 < c.values.size(); ++k) {
      mean += c.values[k];
      ++count;
    }
  }
  mean /= count;
  EXPECT_NEAR(mean, 1.0 / bands, 0.02);
}

TEST(Coherence, CrossingInterpolates) {
  Coherence c;
  c.freqs = {0, 1, 2, 3};
  c.values = {1, 0.9, 0.3, 0.1};
  EXPECT_NEAR(c.crossing(0.5), 1.0 + (0.9 - 0.5) / 0.6, 1e-12);
  EXPECT_THROW(coherence(std::vector<double>(10), std::vector<double>(9), 1.0), invalid_input);
}
