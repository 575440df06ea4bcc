#include <gtest/gtest.h>

#include <atomic>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "tspline/experiment.hpp"

using namespace tspline;

TEST(Config, WriteReadRoundTrip) {
  ExperimentConfig a;
  a.slopes = {2, 4};
  a.strides = {1, 3, 9};
  a.ensembles = 7;
  a.alphas = {0.0, 0.125};
  a.beta = 0.02;
  a.seed = 123456789012345ULL;
  a.damping = 1.0 / 3600.0;
  a.noise = "student:8.5,4.5";
  std::stringstream ss;
  a.write(ss);
  ExperimentConfig b;
  b.read(ss);
  std::stringstream again;
  b.write(again);
  EXPECT_EQ(ss.str(), again.str());
  EXPECT_EQ(b.strides, a.strides);
  EXPECT_EQ(b.seed, a.seed);
  EXPECT_DOUBLE_EQ(b.damping, a.damping);
}

TEST(Config, RejectsBadInput) {
  ExperimentConfig c;
  std::stringstream unknown("bogus = 3\n");
  EXPECT_THROW(c.read(unknown), invalid_input);
  std::stringstream malformed("ensembles 3\n");
  EXPECT_THROW(c.read(malformed), invalid_input);
  std::stringstream bad_value("ensembles = many\n");
  EXPECT_THROW(c.read(bad_value), invalid_input);
  std::stringstream bad_tension("degree = 2\ntension = 3\n");
  EXPECT_THROW(ExperimentConfig().read(bad_tension), invalid_input);
  std::stringstream comments("# header\n\nensembles = 4 # trailing\n");
  ExperimentConfig d;
  d.read(comments);
  EXPECT_EQ(d.ensembles, 4);
}

TEST(Config, NoiseModels) {
  EXPECT_TRUE(parse_noise_model("gaussian:10").is_gaussian());
  const auto t = parse_noise_model("gps-default");
  ASSERT_NE(t.as_student_t(), nullptr);
  EXPECT_DOUBLE_EQ(t.as_student_t()->sigma, 8.5);
  EXPECT_DOUBLE_EQ(t.as_student_t()->nu, 4.5);
  EXPECT_DOUBLE_EQ(parse_noise_model("student:3,7").as_student_t()->nu, 7.0);
  EXPECT_THROW(parse_noise_model("gaussian:abc"), invalid_input);
  EXPECT_THROW(parse_noise_model("laplace:1"), invalid_input);
  EXPECT_THROW(parse_noise_model("student:3"), invalid_input);
}

TEST(Parallel, CoversEveryIndexOnce) {
  for (unsigned jobs : {1u, 3u}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, 2, [](std::size_t i) {
                 if (i == 7) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

TEST(Stats, Percentile) {
  const std::vector<double> v{5, 1, 3, 2, 4};
  EXPECT_DOUBLE_EQ(percentile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(median(v), 3.0);
  EXPECT_DOUBLE_EQ(percentile(v, 0.1), 1.4);
  EXPECT_THROW(percentile({}, 0.5), insufficient_data);
}

TEST(Experiments, FitTableIsIndependentOfThreadCount) {
  ExperimentConfig c;
  c.ensembles = 2;
  c.slopes = {2};
  c.strides = {4};
  c.samples = 200;
  c.jobs = 1;
  const auto a = run_fit_table(c);
  c.jobs = 3;
  const auto b = run_fit_table(c);
  EXPECT_EQ(a.markdown(), b.markdown());
  std::stringstream ra, rb;
  a.write_runs_csv(ra);
  b.write_runs_csv(rb);
  EXPECT_EQ(ra.str(), rb.str());
  ASSERT_EQ(a.runs.size(), 2u);
  for (const auto& r : a.runs) {
    EXPECT_GT(r.mse_optimal, 0.0);
    EXPECT_LE(r.mse_optimal, r.mse_expected * 1.0001);
    EXPECT_GE(r.n_eff, 1.0);
  }
}

TEST(Experiments, GammaFitRecoversAKnownExponent) {
  std::vector<FitRun> runs;
  for (int slope : {2, 3}) {
    for (double g : {0.01, 0.03, 0.1, 0.3, 1.0}) {
      FitRun r{};
      r.slope = slope;
      r.gamma = g;
      r.n_eff = (slope == 2 ? 14.0 : 9.0) * std::pow(g, 0.7);
      runs.push_back(r);
    }
  }
  const auto fit = fit_gamma_power_law(runs);
  EXPECT_NEAR(fit.exponent, 0.7, 1e-9);
}
