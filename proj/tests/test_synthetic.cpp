#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "tspline/spectral.hpp"
#include "tspline/synthetic.hpp"

using namespace tspline;

TEST(Synthetic, SeedsAreDeterministic) {
  MaternSpec s;
  s.n = 500;
  s.seed = 42;
  const auto a = matern_track(s);
  const auto b = matern_track(s);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  s.seed = 43;
  const auto c = matern_track(s);
  EXPECT_NE(a.x, c.x);
  const auto na = add_noise(a, NoiseModel::gaussian(10), 5);
  const auto nb = add_noise(a, NoiseModel::gaussian(10), 5);
  EXPECT_EQ(na.x, nb.x);
}

TEST(Synthetic, MixSeedSpreadsNearbyInputs) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a) {
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(mix_seed(a, b));
  }
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
}

TEST(Synthetic, VelocityVarianceCalibration) {
  MaternSpec s;
  s.n = 1000;
  s.dt = 30;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::uint64_t e = 0; e < 200; ++e) {
    std::mt19937_64 rng(mix_seed(7, e));
    for (int axis = 0; axis < 2; ++axis) {
      const auto v = matern_velocity(s, rng);
      for (double u : v) acc += u * u;
      count += v.size();
    }
  }
  EXPECT_NEAR(acc / static_cast<double>(count), s.u_rms * s.u_rms, 0.05 * s.u_rms * s.u_rms);
}

TEST(Synthetic, HighFrequencySlopeFollowsTheSpectrum) {
  for (double p : {2.0, 3.0, 4.0}) {
    MaternSpec s;
    s.n = 2048;
    s.dt = 30;
    s.slope = p;
    std::vector<double> mean;
    for (std::uint64_t e = 0; e < 20; ++e) {
      std::mt19937_64 rng(mix_seed(9, e));
      auto v = matern_velocity(s, rng);
      // Hann taper keeps edge leakage below the steeper spectra.
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] *= 0.5 - 0.5 * std::cos(2 * std::numbers::pi * (i + 0.5) / static_cast<double>(v.size()));
      }
      const auto sp = periodogram(v, s.dt);
      if (mean.empty()) mean.assign(sp.size() / 2, 0.0);
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += sp.power[k];
    }
    // Least-squares slope of log S against log f over the top decade.
    const double fn = 1.0 / (2 * s.dt);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t k = 1; k < mean.size(); ++k) {
      const double f = static_cast<double>(k) / (s.n * s.dt);
      if (f < fn / 10) continue;
      const double lx = std::log(f), ly = std::log(mean[k]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++n;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_NEAR(slope, -p, 0.3) << "p=" << p;
  }
}

TEST(Synthetic, PositionsIntegrateVelocity) {
  const std::vector<double> v{1, 1, 2, 0};
  const auto x = integrate_trapezoid(v, 2.0);
  EXPECT_DOUBLE_EQ(x[0], 0.0);
  EXPECT_DOUBLE_EQ(x[1], 2.0);
  EXPECT_DOUBLE_EQ(x[2], 5.0);
  EXPECT_DOUBLE_EQ(x[3], 7.0);
}

TEST(Synthetic, ContaminationFraction) {
  MaternSpec s;
  s.n = 20000;
  const auto truth = matern_track(s);
  const double alpha = 0.25;
  const auto noisy = contaminate(truth, NoiseModel::gaussian(10), alpha, NoiseModel::student_t(500, 3), 3);
  double bad = 0.0;
  for (auto c : noisy.contaminated) bad += c;
  const double se = std::sqrt(alpha * (1 - alpha) / s.n);
  EXPECT_NEAR(bad / s.n, alpha, 4 * se);
  const auto clean = contaminate(truth, NoiseModel::gaussian(10), 0.0, NoiseModel::student_t(500, 3), 3);
  double worst = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    EXPECT_EQ(clean.contaminated[i], 0);
    worst = std::max(worst, std::abs(clean.x[i] - truth.x[i]));
  }
  EXPECT_LT(worst, 80.0);
  EXPECT_THROW(contaminate(truth, NoiseModel::gaussian(1), 1.0, NoiseModel::gaussian(1), 1), invalid_input);
}

TEST(Synthetic, Striding) {
  MaternSpec s;
  s.n = 1600;
  const auto t = matern_track(s);
  const auto one = stride(t, 1);
  EXPECT_EQ(one.times, t.times);
  EXPECT_EQ(one.x, t.x);
  for (std::size_t k : {2u, 4u, 8u, 16u, 100u}) {
    const auto sk = stride(t, k);
    EXPECT_EQ(sk.size(), (t.size() + k - 1) / k);
    for (std::size_t i = 0; i < sk.size(); ++i) {
      EXPECT_EQ(sk.times[i], t.times[i * k]);
      EXPECT_EQ(sk.truth_y[i], t.truth_y[i * k]);
    }
  }
  EXPECT_THROW(stride(t, 0), invalid_input);
  EXPECT_THROW(stride(t, 400), insufficient_data);
}

TEST(Synthetic, RejectsBadSpec) {
  MaternSpec s;
  s.slope = 1.0;
  EXPECT_THROW(matern_track(s), invalid_input);
  s.slope = 2.0;
  s.u_rms = 0.0;
  EXPECT_THROW(matern_track(s), invalid_input);
}
