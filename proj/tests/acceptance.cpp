// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [ensembles] (default 50).

#include <gsl/gsl_multimin.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tspline/tspline.hpp"

using namespace tspline;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("criterion %2d %-28s %s  %s\n", id, name.c_str(), ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <class F>
void guarded(int id, const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    auto [ok, detail] = body();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(id, name, ok, detail + fmt(" (%.1fs)", s));
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

std::vector<double> random_grid(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> gap(0.2, 3.0);
  std::vector<double> t(n);
  t[0] = 0.0;
  for (std::size_t i = 1; i < n; ++i) t[i] = t[i - 1] + gap(rng);
  return t;
}

using Result = std::pair<bool, std::string>;

Result interpolation_exactness() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 50.0);
  double worst = 0.0, worst_pu = 0.0;
  for (int k = 1; k <= 5; ++k) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto t = random_grid(rng, 10 + trial % 40);
      std::vector<double> x(t.size());
      double xmax = 0.0;
      for (double& v : x) {
        v = normal(rng);
        xmax = std::max(xmax, std::abs(v));
      }
      const auto s = interpolating_spline(t, x, k);
      for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, std::abs(s(t[i]) - x[i]) / xmax);
      std::uniform_real_distribution<double> u(t.front(), t.back());
      for (int j = 0; j < 50; ++j) {
        const double tt = u(rng);
        const auto w = basis_window(s.knots(), s.knots().span(tt), tt, 0);
        double sum = 0.0;
        for (int r = 0; r < k; ++r) sum += w[r];
        worst_pu = std::max(worst_pu, std::abs(sum - 1.0));
      }
    }
  }
  return {worst < 1e-9 && worst_pu < 1e-12,
          "max rel error " + fmt("%.2e", worst) + ", partition of unity " + fmt("%.2e", worst_pu)};
}

Result lambda_limits() {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> noise(0.0, 10.0);
  const auto t = random_grid(rng, 60);
  std::vector<double> x(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) x[i] = 100.0 * std::sin(t[i] / 10.0) + noise(rng);

  SmoothingOptions o;
  o.order = 4;
  o.tension = 2;
  SmoothingSpline fit(t, x, NoiseModel::gaussian(10.0), o);
  fit.set_lambda(0.0);
  double interp = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) interp = std::max(interp, std::abs(fit.fitted()[i] - x[i]));

  fit.set_lambda(1e12);
  Eigen::MatrixXd a(t.size(), 2);
  Eigen::VectorXd b(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = t[i];
    b(i) = x[i];
  }
  const Eigen::VectorXd line = a * a.colPivHouseholderQr().solve(b);
  double ss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) ss += std::pow(fit.fitted()[i] - line(i), 2);
  const double rms = std::sqrt(ss / static_cast<double>(t.size()));
  return {interp < 1e-8 && rms < 1e-4,
          "lambda=0 max miss " + fmt("%.2e", interp) + " m, lambda=1e12 rms to LS line " + fmt("%.2e", rms) + " m"};
}

Result dense_equivalence() {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal(0.0, 20.0);
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + trial % 8;
    const int k = 2 + trial % 4;
    if (n < static_cast<std::size_t>(k) + 1) continue;
    const auto t = random_grid(rng, n);
    std::vector<double> x(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = normal(rng);
      p[i] = unif(rng);
    }
    const auto kv = interpolation_knots(t, k);
    const auto basis = evaluate_basis(kv, t, 0);
    const int tension = 1 + trial % (k - 1);
    const auto g = tension_matrix(kv, tension);
    const double lambda = std::pow(10.0, -2.0 + 4.0 * unif(rng));
    const auto xi = solve_coefficients(basis, g, p, x, lambda);

    // Dense Householder least squares on the stacked rows [sqrt(lambda w_q) V; W^(1/2) X].
    const Eigen::MatrixXd xd = basis.to_dense();
    const std::size_t m = kv.basis_count(), q = g.rows.size();
    Eigen::MatrixXd stacked = Eigen::MatrixXd::Zero(q + n, m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q + n);
    for (std::size_t r = 0; r < q; ++r) {
      for (int c = 0; c < k; ++c) stacked(r, g.rows[r].start + c) = std::sqrt(lambda * g.rows[r].weight) * g.rows[r].values[c];
    }
    for (std::size_t i = 0; i < n; ++i) {
      stacked.row(q + i) = std::sqrt(p[i]) * xd.row(i);
      rhs(q + i) = std::sqrt(p[i]) * x[i];
    }
    const Eigen::VectorXd ref = stacked.colPivHouseholderQr().solve(rhs);
    for (Eigen::Index j = 0; j < ref.size(); ++j) worst = std::max(worst, std::abs(ref(j) - xi[j]));
  }
  return {worst < 1e-9, "max |dxi| " + fmt("%.2e", worst)};
}

// Simplex search over the coefficients of the penalized t log-likelihood.
struct TLikelihood {
  Eigen::MatrixXd x;
  Eigen::MatrixXd g;
  Eigen::VectorXd obs;
  double lambda, sigma, nu;

  double operator()(const Eigen::VectorXd& xi) const {
    const Eigen::VectorXd r = obs - x * xi;
    double s = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) s += 0.5 * (nu + 1.0) * std::log1p(r(i) * r(i) / (nu * sigma * sigma));
    return s + 0.5 * lambda * xi.dot(g * xi);
  }
};

double simplex_objective(const gsl_vector* v, void* params) {
  const auto* f = static_cast<const TLikelihood*>(params);
  Eigen::VectorXd xi(static_cast<Eigen::Index>(v->size));
  for (std::size_t i = 0; i < v->size; ++i) xi(i) = gsl_vector_get(v, i);
  return (*f)(xi);
}

Eigen::VectorXd simplex_minimize(const TLikelihood& f, Eigen::VectorXd start) {
  const std::size_t n = static_cast<std::size_t>(start.size());
  gsl_multimin_function fn{&simplex_objective, n, const_cast<TLikelihood*>(&f)};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* step = gsl_vector_alloc(n);
  auto* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  for (int restart = 0; restart < 8; ++restart) {
    for (std::size_t i = 0; i < n; ++i) {
      gsl_vector_set(x, i, start(i));
      gsl_vector_set(step, i, restart == 0 ? 1.0 : 1e-2);
    }
    gsl_multimin_fminimizer_set(s, &fn, x, step);
    for (int it = 0; it < 200000; ++it) {
      if (gsl_multimin_fminimizer_iterate(s)) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-10) == GSL_SUCCESS) break;
    }
    for (std::size_t i = 0; i < n; ++i) start(i) = gsl_vector_get(s->x, i);
  }
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(x);
  gsl_vector_free(step);
  return start;
}

Result irls_correctness() {
  std::mt19937_64 rng(14);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 20 + 3 * trial;
    const auto t = random_grid(rng, n);
    const auto noise = NoiseModel::student_t(2.0, 3.0 + trial % 3);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = 20.0 * std::sin(t[i] / 6.0) + noise.sample(rng);

    std::vector<double> sub;
    for (std::size_t i = 0; i < n; i += 5) sub.push_back(t[i]);
    if (sub.back() != t.back()) sub.back() = t.back();
    SmoothingOptions o;
    o.order = 4;
    o.tension = 2;
    o.knots = interpolation_knots(sub, 4);
    SmoothingSpline fit(t, x, noise, o);
    fit.set_lambda(0.5 * std::pow(10.0, trial % 3 - 1));

    TLikelihood f;
    f.x = evaluate_basis(*o.knots, t, 0).to_dense();
    f.g = tension_matrix(*o.knots, 2).gram.to_dense();
    f.obs = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
    f.lambda = fit.matrix_lambda();
    f.sigma = noise.scale();
    f.nu = noise.as_student_t()->nu;
    const Eigen::VectorXd ls = f.x.colPivHouseholderQr().solve(f.obs);
    const Eigen::VectorXd xi = simplex_minimize(f, ls);
    const Eigen::VectorXd fitted = f.x * xi;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(fitted(i) - fit.fitted()[i]));
  }
  return {worst < 1e-4, "max fitted-value gap " + fmt("%.2e", worst) + " m"};
}

Result table1(const ExperimentConfig& base) {
  auto c = base;
  c.strides = {1, 4, 16};
  const auto r = run_table1(c);
  std::cout << r.markdown();
  const auto& t3 = r.at(3, 3);
  const auto& t1 = r.at(3, 1);
  const bool ok = t3.hi < 10.0 && t1.lo > 15.0;
  return {ok, "S=3: T=3 " + fmt("%.1f", t3.lo) + fmt("-%.1f%%", t3.hi) + ", T=1 " + fmt("%.1f", t1.lo) +
                  fmt("-%.1f%%", t1.hi)};
}

Result fit_table(const FitTableResult& r, double mse_target, double neff_target) {
  const auto& first = r.at(2, 1);
  bool ok = std::abs(first.mse_optimal / mse_target - 1.0) <= 0.20 &&
            std::abs(first.n_eff / neff_target - 1.0) <= 0.25;
  double worst_reduced = 0.0, worst_expected = 0.0;
  bool monotone = true;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    worst_reduced = std::max(worst_reduced, std::abs(row.reduced_pct));
    worst_expected = std::max(worst_expected, row.expected_pct);
    if (i > 0 && r.rows[i - 1].slope == row.slope && !(row.mse_optimal > r.rows[i - 1].mse_optimal)) {
      monotone = false;
    }
  }
  ok = ok && worst_reduced <= 0.5 && worst_expected <= 15.0 && monotone;
  return {ok, "w^-2 stride 1: mse " + fmt("%.2f", first.mse_optimal) + " m^2, n_eff " + fmt("%.2f", first.n_eff) +
                  "; max |reduced| " + fmt("%.2f%%", worst_reduced) + ", max expected " +
                  fmt("%.1f%%", worst_expected) + (monotone ? ", monotone" : ", NOT monotone")};
}

Result estimator() {
  double worst_clean = 0.0, worst_noisy = 0.0;
  for (int e = 0; e < 10; ++e) {
    MaternSpec m;
    m.n = 2000;
    m.dt = 30.0;
    m.slope = 2.0;
    m.seed = mix_seed(21, e);
    const auto track = matern_track(m);
    double ss = 0.0;
    for (std::size_t i = 1; i < track.size(); ++i) {
      const double v = (track.truth_x[i] - track.truth_x[i - 1]) / m.dt;
      ss += v * v;
    }
    const double sample_rms = std::sqrt(ss / static_cast<double>(track.size() - 1));
    const auto clean = estimate_rms_derivative(track.truth_x, m.dt, 0.0, 1);
    worst_clean = std::max(worst_clean, std::abs(clean.value / sample_rms - 1.0));

    const auto noisy = add_noise(track, NoiseModel::gaussian(10.0), mix_seed(22, e));
    const auto est = estimate_rms_derivative(noisy.x, m.dt, 10.0, 1);
    worst_noisy = std::max(worst_noisy, std::abs(est.value / m.u_rms - 1.0));
  }
  return {worst_clean <= 0.15 && worst_noisy <= 0.25,
          "noiseless worst " + fmt("%.1f%%", 100 * worst_clean) + ", noisy u_rms worst " +
              fmt("%.1f%%", 100 * worst_noisy)};
}

Result projection() {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> lat(-70.0, 70.0), lon(-180.0, 180.0), dir(0.0, 2 * std::numbers::pi),
      off(-20.0, 20.0);
  double worst_trip = 0.0, worst_dist = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Projection p;
    p.central_meridian = lon(rng);
    const double la = lat(rng), lo = p.central_meridian + off(rng);
    const auto [x, y] = p.forward(la, lo);
    const auto [la2, lo2] = p.inverse(x, y);
    worst_trip = std::max({worst_trip, std::abs(la2 - la), std::abs(lo2 - lo)});

    const double th = dir(rng);
    const double la3 = la + 100.0 * std::cos(th) / earth_radius * 180.0 / std::numbers::pi;
    const double lo3 = lo + 100.0 * std::sin(th) / (earth_radius * std::cos(la * std::numbers::pi / 180.0)) * 180.0 / std::numbers::pi;
    Projection local;
    local.central_meridian = lo;
    const auto [x1, y1] = local.forward(la, lo);
    const auto [x2, y2] = local.forward(la3, lo3);
    const double h = haversine(la, lo, la3, lo3);
    worst_dist = std::max(worst_dist, std::abs(std::hypot(x2 - x1, y2 - y1) / h - 1.0));
  }
  return {worst_trip < 1e-6 && worst_dist < 1e-3,
          "round trip " + fmt("%.1e deg", worst_trip) + ", 100 m distance " + fmt("%.3f%%", 100 * worst_dist)};
}

Result determinism(const ExperimentConfig& base) {
  auto c = base;
  c.ensembles = 3;
  c.strides = {1, 4};
  c.slopes = {2, 3};
  auto render = [&](int jobs) {
    auto cc = c;
    cc.jobs = jobs;
    const auto r = run_fit_table(cc);
    std::ostringstream os;
    os << r.markdown();
    r.write_runs_csv(os);
    return os.str();
  };
  const auto a = render(1), b = render(1), d = render(3);
  return {a == b && a == d, a == b ? (a == d ? "identical across reruns and job counts" : "job count changes output")
                                   : "rerun changes output"};
}

}  // namespace

int main(int argc, char** argv) {
  ExperimentConfig c;
  c.ensembles = argc > 1 ? std::stoi(argv[1]) : 50;
  const auto start = std::chrono::steady_clock::now();

  guarded(1, "interpolation exactness", interpolation_exactness);
  guarded(2, "lambda limits", lambda_limits);
  guarded(3, "banded vs dense solve", dense_equivalence);
  guarded(4, "IRLS vs simplex", irls_correctness);
  guarded(5, "table 1 ordering", [&] { return table1(c); });

  std::optional<FitTableResult> gaussian;
  guarded(6, "table 2 gaussian", [&] {
    gaussian = run_fit_table(c);
    std::cout << gaussian->markdown();
    return fit_table(*gaussian, 11.5, 8.6);
  });
  guarded(7, "table 3 student-t", [&] {
    auto ct = c;
    ct.noise = ct.t_noise;
    const auto r = run_fit_table(ct);
    std::cout << r.markdown();
    return fit_table(r, 11.8, 8.2);
  });
  guarded(8, "gamma power law", [&]() -> Result {
    if (!gaussian) return {false, "table 2 unavailable"};
    const auto g = fit_gamma_power_law(gaussian->runs);
    std::cout << g.markdown();
    return {g.exponent >= 0.60 && g.exponent <= 0.80, "exponent " + fmt("%.3f", g.exponent)};
  });
  guarded(9, "effective nyquist", [&] {
    const auto r = run_nyquist(c, 2, {1, 10, 100});
    std::cout << r.markdown();
    bool ok = true;
    std::string detail = "crossing/nyquist";
    for (const auto& row : r.rows) {
      ok = ok && row.ratio >= 1.0 / 1.5 && row.ratio <= 1.5;
      detail += fmt(" %.3f", row.ratio);
    }
    return Result{ok, detail};
  });

  std::optional<RobustnessResult> robust;
  guarded(10, "ranged mse robustness", [&]() -> Result {
    auto cr = c;
    cr.noise = cr.t_noise;
    cr.alphas = {0.05, 0.10, 0.25};
    robust = run_robustness(cr);
    std::cout << robust->markdown();
    const auto& row = robust->at(0.10);
    const bool ok = row.mse_robust < row.mse_plain && row.mse_robust <= 2.0 * row.mse_clean_optimal &&
                    row.flag_precision >= 0.8;
    return {ok, "alpha 0.10: ranged " + fmt("%.1f", row.mse_robust) + ", plain " + fmt("%.1f", row.mse_plain) +
                    ", clean " + fmt("%.1f", row.mse_clean_optimal) + " m^2, precision " +
                    fmt("%.3f", row.flag_precision)};
  });
  guarded(11, "outlier fraction recovery", [&]() -> Result {
    if (!robust) return {false, "robustness run unavailable"};
    bool ok = true;
    std::string detail = "median alpha";
    for (double a : {0.05, 0.10, 0.25}) {
      const double m = robust->at(a).median_alpha;
      ok = ok && m >= 0.5 * a && m <= 2.0 * a;
      detail += fmt(" %.3f", m) + fmt("/%.2f", a);
    }
    return Result{ok, detail};
  });
  guarded(12, "rms derivative estimator", estimator);
  guarded(13, "projection", projection);
  guarded(14, "determinism", [&] { return determinism(c); });

  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d criteria failed, total %.0fs\n", failures, s);
  return failures == 0 ? 0 : 1;
}
