#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "tspline/bivariate.hpp"
#include "tspline/synthetic.hpp"

using namespace tspline;

namespace {

TrackSeries noisy_track(std::uint64_t seed, std::size_t n = 300) {
  MaternSpec s;
  s.n = n;
  s.dt = 30;
  s.seed = seed;
  return add_noise(matern_track(s), NoiseModel::gaussian(10), seed + 1);
}

}  // namespace

TEST(Projection, CentralMeridianMapsToYAxis) {
  const Projection p{-70.0};
  for (double lat : {-60.0, -10.0, 0.0, 33.3, 80.0}) {
    const auto [x, y] = p.forward(lat, -70.0);
    EXPECT_NEAR(x, 0.0, 1e-9);
    EXPECT_NEAR(y, earth_radius * lat * std::numbers::pi / 180.0, 1e-6);
  }
}

TEST(Projection, RoundTripAndLocalDistances) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lat(-75, 75), lon(-180, 180), off(-2, 2), dir(0, 2 * std::numbers::pi);
  for (int i = 0; i < 500; ++i) {
    const Projection p{lon(rng)};
    const double a = lat(rng), b = p.central_meridian + off(rng);
    const auto [x, y] = p.forward(a, b);
    const auto [a2, b2] = p.inverse(x, y);
    EXPECT_NEAR(a2, a, 1e-6);
    EXPECT_NEAR(b2, b, 1e-6);
    // A second point about 100 m away.
    const double th = dir(rng);
    const double dlat = 100.0 * std::cos(th) / earth_radius * 180.0 / std::numbers::pi;
    const double dlon = 100.0 * std::sin(th) / (earth_radius * std::cos(a * std::numbers::pi / 180)) * 180.0 /
                        std::numbers::pi;
    const auto [x2, y2] = p.forward(a + dlat, b + dlon);
    const double geo = haversine(a, b, a + dlat, b + dlon);
    EXPECT_NEAR(std::hypot(x2 - x, y2 - y), geo, 1e-3 * geo);
  }
}

TEST(Projection, HaversineKnownValue) {
  // One degree of latitude along a meridian.
  EXPECT_NEAR(haversine(0, 0, 1, 0), earth_radius * std::numbers::pi / 180.0, 1e-6);
  EXPECT_THROW(projection_for(std::vector<double>{-100, 10}), out_of_range);
  EXPECT_THROW(Projection{}.forward(89.5, 0), out_of_range);
}

TEST(Projection, ProjectTrackCentresOnLongitudes) {
  TrackSeries t;
  t.times = {0, 1, 2};
  t.x = {10, 10.001, 10.002};
  t.y = {20, 20.002, 20.004};
  t.geographic = true;
  const auto [m, p] = project_track(t);
  EXPECT_NEAR(p.central_meridian, 20.002, 1e-12);
  EXPECT_FALSE(m.geographic);
  EXPECT_NEAR(m.x[1], 0.0, 1e-6);
}

TEST(MeanRemoval, ConstantVelocityLeavesNoResidual) {
  TrackSeries t;
  for (int i = 0; i < 50; ++i) {
    t.times.push_back(30.0 * i);
    t.x.push_back(5.0 + 0.3 * 30.0 * i);
    t.y.push_back(-2.0 - 0.1 * 30.0 * i);
  }
  const auto m = remove_mean(t, 3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(m.residual.x[i], 0.0, 1e-9);
    EXPECT_NEAR(m.residual.y[i], 0.0, 1e-9);
  }
}

TEST(MeanRemoval, DisabledKeepsInput) {
  const auto t = noisy_track(3, 120);
  BivariateOptions o;
  o.remove_mean = false;
  BivariateFit f(t, NoiseModel::gaussian(10), o);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(f.mean_x()(t.times[i]), 0.0, 1e-12);
  f.set_lambda(0.0);
  const auto fx = f.fitted_x();
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(fx[i], t.x[i], 1e-7);
}

TEST(TotalOperator, Algebra) {
  std::mt19937_64 rng(4);
  const Eigen::Index n = 10;
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd sm = Eigen::MatrixXd::Zero(n, n), sl = Eigen::MatrixXd::Zero(n, n);
    std::normal_distribution<double> g;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        sm(i, j) = g(rng);
        sl(i, j) = g(rng);
      }
    }
    const Eigen::MatrixXd st = total_operator(sm, sl);
    Eigen::MatrixXd oracle(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        double prod = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) prod += sl(i, k) * sm(k, j);
        oracle(i, j) = sm(i, j) + sl(i, j) - prod;
      }
    }
    EXPECT_LT((st - oracle).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((total_operator(sm, id) - id).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((total_operator(Eigen::MatrixXd::Zero(n, n), sl) - sl).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_THROW(total_operator(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 3)), invalid_input);
}

TEST(Bivariate, ZeroTensionInterpolatesBothAxes) {
  const auto t = noisy_track(5, 150);
  BivariateFit f(t, NoiseModel::gaussian(10));
  f.set_lambda(0.0);
  const auto fx = f.fitted_x(), fy = f.fitted_y();
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(fx[i], t.x[i], 1e-6);
    EXPECT_NEAR(fy[i], t.y[i], 1e-6);
  }
}

TEST(Bivariate, RotationInvariance) {
  const auto t = noisy_track(6, 200);
  TrackSeries r = t;
  for (std::size_t i = 0; i < t.size(); ++i) {
    r.x[i] = -t.y[i];
    r.y[i] = t.x[i];
  }
  BivariateFit a(t, NoiseModel::gaussian(10));
  BivariateFit b(r, NoiseModel::gaussian(10));
  a.minimize_expected_mse();
  b.set_lambda(a.lambda());
  const auto ax = a.fitted_x(), ay = a.fitted_y(), bx = b.fitted_x(), by = b.fitted_y();
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(bx[i], -ay[i], 1e-6);
    EXPECT_NEAR(by[i], ax[i], 1e-6);
  }
  EXPECT_NEAR(a.expected_mse(), b.expected_mse(), 1e-8 * a.expected_mse());
}

TEST(Bivariate, SharedLambdaBeatsChanceAndAxesAgree) {
  double mx = 0.0, my = 0.0;
  for (std::uint64_t e = 0; e < 8; ++e) {
    const auto t = noisy_track(100 + e, 300);
    BivariateFit f(t, NoiseModel::gaussian(10));
    f.minimize_expected_mse();
    const auto fx = f.fitted_x(), fy = f.fitted_y();
    mx += mean_square_error(fx, t.truth_x);
    my += mean_square_error(fy, t.truth_y);
  }
  EXPECT_LT(mx / 8, 100.0);
  EXPECT_LT(my / 8, 100.0);
  EXPECT_NEAR(mx / my, 1.0, 0.3);
}

TEST(Bivariate, StandardErrorsAreConsistent) {
  const auto t = noisy_track(7, 120);
  BivariateFit f(t, NoiseModel::gaussian(10));
  f.minimize_expected_mse();
  const auto full = f.standard_errors(0);
  const auto trace = f.standard_errors_trace(0);
  ASSERT_EQ(full.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_GT(full[i], 0.0);
    EXPECT_LT(full[i], 10.0 + 1e-9);
    EXPECT_LT(trace[i], 10.0 + 1e-9);
  }
  // With no mean removal S_T = S_lambda, so S Sigma S^T is bounded by S Sigma.
  const Eigen::MatrixXd s = f.fit_x().smoothing_matrix();
  const auto se = standard_errors(s, 100.0 * Eigen::MatrixXd::Identity(t.size(), t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_LE(se[i], trace[i] + 1e-9);
}

TEST(Bivariate, RejectsGeographicInput) {
  TrackSeries t;
  t.times = {0, 1, 2, 3, 4, 5, 6};
  t.x = t.y = {0, 1, 2, 3, 4, 5, 6};
  t.geographic = true;
  EXPECT_THROW(BivariateFit(t, NoiseModel::gaussian(1)), invalid_input);
}
