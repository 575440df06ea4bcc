#ifndef TSPLINE_EXPERIMENT_HPP
#define TSPLINE_EXPERIMENT_HPP

// Ensemble experiments on synthetic Matérn tracks. Every run derives its
// seeds from (seed, experiment, slope, stride, ensemble), and results are
// stored by run index, so output does not depend on the number of workers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "tspline/bivariate.hpp"
#include "tspline/distributions.hpp"
#include "tspline/error.hpp"
#include "tspline/robust.hpp"
#include "tspline/smoothing.hpp"
#include "tspline/spectral.hpp"
#include "tspline/synthetic.hpp"

namespace tspline {

/// Parses "gaussian:SIGMA", "student:SIGMA,NU" or "gps-default".
inline NoiseModel parse_noise_model(const std::string& text) {
  if (text == "gps-default") return NoiseModel::gps_default();
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw invalid_input("noise model: unrecognized '" + text + "'");
  const std::string kind = text.substr(0, colon);
  const std::string args = text.substr(colon + 1);
  try {
    if (kind == "gaussian") {
      std::size_t used = 0;
      const double s = std::stod(args, &used);
      if (used != args.size()) throw invalid_input("noise model: bad gaussian sigma");
      return NoiseModel::gaussian(s);
    }
    if (kind == "student") {
      const auto comma = args.find(',');
      if (comma == std::string::npos) throw invalid_input("noise model: student needs SIGMA,NU");
      return NoiseModel::student_t(std::stod(args.substr(0, comma)), std::stod(args.substr(comma + 1)));
    }
  } catch (const std::logic_error&) {
    throw invalid_input("noise model: could not parse '" + text + "'");
  }
  throw invalid_input("noise model: unrecognized '" + text + "'");
}

/// Runs f(i) for i in [0, count) on `jobs` threads (0 = all cores). The
/// first exception thrown by any task is rethrown.
template <class F>
void parallel_for(std::size_t count, unsigned jobs, F&& f) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

struct ExperimentConfig {
  std::vector<int> slopes{2, 3, 4};
  std::vector<std::size_t> strides{1, 2, 4, 8, 16};
  int ensembles = 50;
  int degree = 3;   // S
  int tension = 3;  // T
  int max_degree = 5;
  std::string noise = "gaussian:10";
  std::string t_noise = "gps-default";  // table 3 and the robustness runs
  std::vector<double> alphas{0.0, 0.05, 0.10, 0.25};
  double outlier_scale = 50.0;  // outlier t scale in units of the noise scale
  double beta = 0.01;
  std::uint64_t seed = 1;
  std::size_t samples = 1000;  // observations per run after striding
  std::size_t robust_samples = 500;
  double dt = 30.0;
  double u_rms = 0.2;
  double damping = 1.0 / 1800.0;
  double gamma_c = 14.0;
  double gamma_m = 0.71;
  int bands = 8;
  unsigned jobs = 0;
  std::string output_dir = ".";

  NoiseModel noise_model() const { return parse_noise_model(noise); }

  void validate() const {
    if (ensembles < 1) throw invalid_input("config: ensembles must be >= 1");
    if (slopes.empty() || strides.empty()) throw invalid_input("config: slopes and strides must be nonempty");
    for (int p : slopes) {
      if (p < 2) throw invalid_input("config: slopes must be >= 2");
    }
    for (auto k : strides) {
      if (k < 1) throw invalid_input("config: strides must be >= 1");
    }
    if (degree < 1 || degree + 1 > max_order) throw invalid_input("config: degree out of range");
    if (tension < 1 || tension > degree) throw invalid_input("config: tension must satisfy 1 <= T <= S");
    if (max_degree < 1 || max_degree + 1 > max_order) throw invalid_input("config: max_degree out of range");
    if (!(beta >= 0.0 && beta < 0.5)) throw invalid_input("config: beta must lie in [0, 0.5)");
    if (samples < 16 || robust_samples < 16) throw invalid_input("config: too few samples");
    if (!(dt > 0.0) || !(u_rms > 0.0) || !(damping > 0.0)) throw invalid_input("config: dt, u_rms, damping must be positive");
    if (bands < 2) throw invalid_input("config: bands must be >= 2");
    noise_model();
    parse_noise_model(t_noise);
  }

  /// Reads `key = value` lines; '#' starts a comment. Lists are comma separated.
  void read(std::istream& in) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      if (trim(line).empty()) continue;
      if (eq == std::string::npos) {
        throw invalid_input("config line " + std::to_string(line_no) + ": expected key = value");
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    validate();
  }

  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "slopes") slopes = split<int>(value);
      else if (key == "strides") strides = split<std::size_t>(value);
      else if (key == "ensembles") ensembles = std::stoi(value);
      else if (key == "degree") degree = std::stoi(value);
      else if (key == "tension") tension = std::stoi(value);
      else if (key == "max_degree") max_degree = std::stoi(value);
      else if (key == "noise") noise = value;
      else if (key == "t_noise") t_noise = value;
      else if (key == "alphas") alphas = split<double>(value);
      else if (key == "outlier_scale") outlier_scale = std::stod(value);
      else if (key == "beta") beta = std::stod(value);
      else if (key == "seed") seed = std::stoull(value);
      else if (key == "samples") samples = std::stoul(value);
      else if (key == "robust_samples") robust_samples = std::stoul(value);
      else if (key == "dt") dt = std::stod(value);
      else if (key == "u_rms") u_rms = std::stod(value);
      else if (key == "damping") damping = std::stod(value);
      else if (key == "gamma_c") gamma_c = std::stod(value);
      else if (key == "gamma_m") gamma_m = std::stod(value);
      else if (key == "bands") bands = std::stoi(value);
      else if (key == "jobs") jobs = static_cast<unsigned>(std::stoul(value));
      else if (key == "output_dir") output_dir = value;
      else throw invalid_input("config: unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw invalid_input("config: bad value for '" + key + "'");
    }
  }

  void write(std::ostream& os) const {
    os.precision(17);
    os << "slopes = " << join(slopes) << '\n'
       << "strides = " << join(strides) << '\n'
       << "ensembles = " << ensembles << '\n'
       << "degree = " << degree << '\n'
       << "tension = " << tension << '\n'
       << "max_degree = " << max_degree << '\n'
       << "noise = " << noise << '\n'
       << "t_noise = " << t_noise << '\n'
       << "alphas = " << join(alphas) << '\n'
       << "outlier_scale = " << outlier_scale << '\n'
       << "beta = " << beta << '\n'
       << "seed = " << seed << '\n'
       << "samples = " << samples << '\n'
       << "robust_samples = " << robust_samples << '\n'
       << "dt = " << dt << '\n'
       << "u_rms = " << u_rms << '\n'
       << "damping = " << damping << '\n'
       << "gamma_c = " << gamma_c << '\n'
       << "gamma_m = " << gamma_m << '\n'
       << "bands = " << bands << '\n'
       << "jobs = " << jobs << '\n'
       << "output_dir = " << output_dir << '\n';
  }

  MaternSpec matern(int slope, std::size_t n, std::uint64_t run_seed) const {
    MaternSpec s;
    s.u_rms = u_rms;
    s.damping = damping;
    s.slope = slope;
    s.n = n;
    s.dt = dt;
    s.seed = run_seed;
    return s;
  }

 private:
  template <class T>
  static std::vector<T> split(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.find_first_not_of(" \t") == std::string::npos) continue;
      if constexpr (std::is_same_v<T, double>) out.push_back(std::stod(item));
      else if constexpr (std::is_same_v<T, int>) out.push_back(std::stoi(item));
      else out.push_back(static_cast<T>(std::stoull(item)));
    }
    return out;
  }

  template <class T>
  static std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
  }
};

namespace detail {

inline std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline double mean_of(std::span<const double> v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stderr_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

inline double fit_true_mse(SmoothingSpline& fit, std::span<const double> truth) {
  fit.minimize([truth](const SmoothingSpline& f) { return mean_square_error(f.fitted(), truth); });
  return mean_square_error(fit.fitted(), truth);
}

/// Noisy strided track for one run.
inline TrackSeries synthetic_run(const ExperimentConfig& c, const NoiseModel& noise, int slope,
                                 std::size_t k, std::size_t samples, std::uint64_t signal_seed,
                                 std::uint64_t noise_seed, int order) {
  const auto truth = matern_track(c.matern(slope, samples * k, signal_seed));
  return stride(add_noise(truth, noise, noise_seed), k, order);
}

}  // namespace detail

/// Empirical quantile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw insufficient_data("percentile: empty sample");
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

/// Spline degree S against tension order T: the 68% range of the percentage
/// increase of true MSE over the best (S, T) of each run.
struct Table1Result {
  struct Cell {
    int degree;
    int tension;
    double lo;      // 16th percentile, percent
    double hi;      // 84th percentile, percent
    double median;  // percent
  };
  std::vector<Cell> cells;
  int max_degree = 5;
  std::size_t runs = 0;

  const Cell& at(int s, int t) const {
    for (const auto& c : cells) {
      if (c.degree == s && c.tension == t) return c;
    }
    throw invalid_input("table1: no such cell");
  }

  std::string markdown() const {
    std::ostringstream os;
    os << "| S \\ T |";
    for (int t = 1; t <= max_degree; ++t) os << ' ' << t << " |";
    os << "\n|---|";
    for (int t = 1; t <= max_degree; ++t) os << "---|";
    os << '\n';
    for (int s = 1; s <= max_degree; ++s) {
      os << "| " << s << " |";
      for (int t = 1; t <= max_degree; ++t) {
        if (t <= s) {
          const auto& c = at(s, t);
          os << ' ' << detail::format("%.1f", c.lo) << '-' << detail::format("%.1f", c.hi) << "% |";
        } else {
          os << "  |";
        }
      }
      os << '\n';
    }
    return os.str();
  }
};

inline Table1Result run_table1(const ExperimentConfig& c) {
  c.validate();
  const auto noise = c.noise_model();
  std::vector<std::pair<int, int>> combos;
  for (int s = 1; s <= c.max_degree; ++s) {
    for (int t = 1; t <= s; ++t) combos.emplace_back(s, t);
  }
  const std::size_t ns = c.slopes.size(), nk = c.strides.size();
  const std::size_t runs = ns * nk * static_cast<std::size_t>(c.ensembles);
  std::vector<std::vector<double>> mse(runs);
  parallel_for(runs, c.jobs, [&](std::size_t r) {
    const int e = static_cast<int>(r % c.ensembles);
    const std::size_t ki = (r / c.ensembles) % nk;
    const std::size_t si = r / (c.ensembles * nk);
    const int slope = c.slopes[si];
    const std::size_t k = c.strides[ki];
    const auto track = detail::synthetic_run(c, noise, slope, k, c.samples,
                                             mix_seed(c.seed, 1, slope, k, e),
                                             mix_seed(c.seed, 2, slope, k, e), c.max_degree + 1);
    std::vector<double> out;
    for (auto [s, t] : combos) {
      SmoothingOptions o;
      o.order = s + 1;
      o.tension = t;
      SmoothingSpline fit(track.times, track.x, noise, o);
      out.push_back(detail::fit_true_mse(fit, track.truth_x));
    }
    mse[r] = std::move(out);
  });
  Table1Result res;
  res.max_degree = c.max_degree;
  res.runs = runs;
  for (std::size_t j = 0; j < combos.size(); ++j) {
    std::vector<double> inc;
    for (const auto& m : mse) {
      const double best = *std::min_element(m.begin(), m.end());
      inc.push_back(100.0 * (m[j] / best - 1.0));
    }
    res.cells.push_back({combos[j].first, combos[j].second, percentile(inc, 0.16),
                         percentile(inc, 0.84), median(inc)});
  }
  return res;
}

/// One run of the fit-comparison tables.
struct FitRun {
  int slope;
  std::size_t stride;
  int ensemble;
  double gamma;          // sigma / (u_rms dt stride) from the generating parameters
  double n_eff;          // n_eff^SE of the optimal fit
  double mse_optimal;    // lambda minimizing the true MSE, full knots
  double mse_reduced;    // same on the reduced knot set
  double mse_blind;      // a-priori lambda on the a-priori reduced knots
  double mse_expected;   // expected-MSE minimum, knots reduced by its own n_eff
};

struct FitTableResult {
  struct Row {
    int slope;
    std::size_t stride;
    double n_eff;
    double mse_optimal;
    double mse_optimal_ci;  // half width of the 95% interval of the mean
    double reduced_pct;
    double blind_pct;
    double expected_pct;
  };
  std::vector<Row> rows;
  std::vector<FitRun> runs;

  const Row& at(int slope, std::size_t k) const {
    for (const auto& r : rows) {
      if (r.slope == slope && r.stride == k) return r;
    }
    throw invalid_input("fit table: no such row");
  }

  std::string markdown() const {
    std::ostringstream os;
    os << "| slope | stride | n_eff | optimal mse (m^2) | reduced dof | blind initial | expected mse |\n"
       << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      os << "| " << r.slope << " | " << r.stride << " | " << detail::format("%.2f", r.n_eff) << " | "
         << detail::format("%.3g", r.mse_optimal) << " +/- " << detail::format("%.2g", r.mse_optimal_ci)
         << " | " << detail::format("%.1f", r.reduced_pct) << "% | "
         << detail::format("%.1f", r.blind_pct) << "% | " << detail::format("%.1f", r.expected_pct)
         << "% |\n";
    }
    return os.str();
  }

  void write_runs_csv(std::ostream& os) const {
    os << "slope,stride,ensemble,gamma,n_eff,mse_optimal,mse_reduced,mse_blind,mse_expected\n";
    os.precision(10);
    for (const auto& r : runs) {
      os << r.slope << ',' << r.stride << ',' << r.ensemble << ',' << r.gamma << ',' << r.n_eff << ','
         << r.mse_optimal << ',' << r.mse_reduced << ',' << r.mse_blind << ',' << r.mse_expected << '\n';
    }
  }
};

/// Optimal, reduced-knot, blind a-priori and expected-MSE fits per slope
/// and stride. Percentages are ratios of ensemble means.
inline FitTableResult run_fit_table(const ExperimentConfig& c) {
  c.validate();
  const auto noise = c.noise_model();
  const double sigma = std::sqrt(noise.variance());
  const int order = c.degree + 1;
  const std::size_t ns = c.slopes.size(), nk = c.strides.size();
  const std::size_t total = ns * nk * static_cast<std::size_t>(c.ensembles);
  std::vector<FitRun> runs(total);
  parallel_for(total, c.jobs, [&](std::size_t r) {
    const int e = static_cast<int>(r % c.ensembles);
    const std::size_t ki = (r / c.ensembles) % nk;
    const std::size_t si = r / (c.ensembles * nk);
    const int slope = c.slopes[si];
    const std::size_t k = c.strides[ki];
    const auto track = detail::synthetic_run(c, noise, slope, k, c.samples,
                                             mix_seed(c.seed, 1, slope, k, e),
                                             mix_seed(c.seed, 2, slope, k, e), order);
    SmoothingOptions o;
    o.order = order;
    o.tension = c.tension;
    o.gamma_c = c.gamma_c;
    o.gamma_m = c.gamma_m;
    FitRun run{slope, k, e, sigma / (c.u_rms * c.dt * static_cast<double>(k)), 0, 0, 0, 0, 0};

    SmoothingSpline full(track.times, track.x, noise, o);
    run.mse_optimal = detail::fit_true_mse(full, track.truth_x);
    run.n_eff = full.effective_sample_size().n_eff_se;

    SmoothingOptions ro = o;
    ro.knots = reduced_knots(track.times, run.n_eff, order);
    SmoothingSpline reduced(track.times, track.x, noise, ro);
    reduced.settle_lambda(full.lambda());
    run.mse_reduced = detail::fit_true_mse(reduced, track.truth_x);

    SmoothingOptions bo = o;
    bo.knots = reduced_knots(track.times, full.apriori().n_eff, order);
    SmoothingSpline blind(track.times, track.x, noise, bo);
    run.mse_blind = mean_square_error(blind.fitted(), track.truth_x);

    SmoothingSpline scout(track.times, track.x, noise, o);
    scout.minimize_expected_mse();
    SmoothingOptions eo = o;
    eo.knots = reduced_knots(track.times, scout.effective_sample_size().n_eff_se, order);
    SmoothingSpline expected(track.times, track.x, noise, eo);
    expected.settle_lambda(scout.lambda());
    expected.minimize_expected_mse();
    run.mse_expected = mean_square_error(expected.fitted(), track.truth_x);
    runs[r] = run;
  });

  FitTableResult res;
  res.runs = runs;
  for (std::size_t si = 0; si < ns; ++si) {
    for (std::size_t ki = 0; ki < nk; ++ki) {
      std::vector<double> ne, opt, red, bl, ex;
      for (const auto& run : runs) {
        if (run.slope != c.slopes[si] || run.stride != c.strides[ki]) continue;
        ne.push_back(run.n_eff);
        opt.push_back(run.mse_optimal);
        red.push_back(run.mse_reduced);
        bl.push_back(run.mse_blind);
        ex.push_back(run.mse_expected);
      }
      const double m = detail::mean_of(opt);
      res.rows.push_back({c.slopes[si], c.strides[ki], detail::mean_of(ne), m,
                          1.96 * detail::stderr_of(opt), 100.0 * (detail::mean_of(red) / m - 1.0),
                          100.0 * (detail::mean_of(bl) / m - 1.0),
                          100.0 * (detail::mean_of(ex) / m - 1.0)});
    }
  }
  return res;
}

/// Power law n_eff^SE = C Gamma^m fitted to optimal fits.
struct GammaFitResult {
  struct PerSlope {
    int slope;
    double c;
    double m;
  };
  double exponent = 0.0;  // common exponent with one intercept per slope
  std::vector<PerSlope> per_slope;

  std::string markdown() const {
    std::ostringstream os;
    os << "| slope | C | m |\n|---|---|---|\n";
    for (const auto& p : per_slope) {
      os << "| " << p.slope << " | " << detail::format("%.2f", p.c) << " | "
         << detail::format("%.3f", p.m) << " |\n";
    }
    os << "| all | | " << detail::format("%.3f", exponent) << " |\n";
    return os.str();
  }
};

/// Least-squares fit of log n_eff on log Gamma: one exponent shared by all
/// slopes with separate intercepts, plus an independent fit per slope.
inline GammaFitResult fit_gamma_power_law(std::span<const FitRun> runs) {
  std::vector<int> slopes;
  for (const auto& r : runs) {
    if (std::find(slopes.begin(), slopes.end(), r.slope) == slopes.end()) slopes.push_back(r.slope);
  }
  if (runs.size() < slopes.size() + 1) throw insufficient_data("gamma fit: too few runs");
  const auto n = static_cast<Eigen::Index>(runs.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(slopes.size()) + 1);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = runs[i];
    const auto s = std::find(slopes.begin(), slopes.end(), r.slope) - slopes.begin();
    a(i, 0) = std::log(r.gamma);
    a(i, 1 + s) = 1.0;
    b(i) = std::log(r.n_eff);
  }
  GammaFitResult res;
  res.exponent = a.colPivHouseholderQr().solve(b)(0);
  for (int slope : slopes) {
    std::vector<double> lx, ly;
    for (const auto& r : runs) {
      if (r.slope != slope) continue;
      lx.push_back(std::log(r.gamma));
      ly.push_back(std::log(r.n_eff));
    }
    const double mx = detail::mean_of(lx), my = detail::mean_of(ly);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxy += (lx[i] - mx) * (ly[i] - my);
      sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    const double m = sxx > 0.0 ? sxy / sxx : 0.0;
    res.per_slope.push_back({slope, std::exp(my - m * mx), m});
  }
  return res;
}

/// Coherence of fitted and true velocity against the effective Nyquist.
struct NyquistResult {
  struct Row {
    std::size_t stride;
    double n_eff;
    double effective_nyquist;  // Hz
    double crossing;           // Hz, ensemble-mean coherence falls below 0.5
    double ratio;              // crossing / effective_nyquist
  };
  std::vector<Row> rows;
  std::vector<std::vector<double>> freqs, coherence;

  std::string markdown() const {
    std::ostringstream os;
    os << "| stride | n_eff | effective nyquist (Hz) | coherence 0.5 crossing (Hz) | ratio |\n"
       << "|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      os << "| " << r.stride << " | " << detail::format("%.2f", r.n_eff) << " | "
         << detail::format("%.4g", r.effective_nyquist) << " | " << detail::format("%.4g", r.crossing)
         << " | " << detail::format("%.3f", r.ratio) << " |\n";
    }
    return os.str();
  }
};

inline NyquistResult run_nyquist(const ExperimentConfig& c, int slope,
                                 const std::vector<std::size_t>& strides) {
  c.validate();
  const auto noise = c.noise_model();
  const int order = c.degree + 1;
  const std::size_t total = strides.size() * static_cast<std::size_t>(c.ensembles);
  struct Out {
    double n_eff;
    std::vector<double> freqs, coh;
  };
  std::vector<Out> outs(total);
  parallel_for(total, c.jobs, [&](std::size_t r) {
    const int e = static_cast<int>(r % c.ensembles);
    const std::size_t k = strides[r / c.ensembles];
    const auto track = detail::synthetic_run(c, noise, slope, k, c.samples,
                                             mix_seed(c.seed, 5, slope, k, e),
                                             mix_seed(c.seed, 6, slope, k, e), order);
    SmoothingOptions o;
    o.order = order;
    o.tension = c.tension;
    SmoothingSpline fit(track.times, track.x, noise, o);
    detail::fit_true_mse(fit, track.truth_x);
    const double h = track.times[1] - track.times[0];
    std::vector<double> uf(track.size() - 1), ut(track.size() - 1);
    for (std::size_t i = 0; i + 1 < track.size(); ++i) {
      uf[i] = (fit.fitted()[i + 1] - fit.fitted()[i]) / h;
      ut[i] = (track.truth_x[i + 1] - track.truth_x[i]) / h;
    }
    const auto coh = tspline::coherence(uf, ut, h, c.bands);
    outs[r] = {fit.effective_sample_size().n_eff_se, coh.freqs, coh.values};
  });
  NyquistResult res;
  for (std::size_t ki = 0; ki < strides.size(); ++ki) {
    std::vector<double> ne;
    Coherence mean_coh;
    mean_coh.bands = c.bands;
    for (int e = 0; e < c.ensembles; ++e) {
      const auto& o = outs[ki * c.ensembles + e];
      ne.push_back(o.n_eff);
      if (mean_coh.values.empty()) {
        mean_coh.freqs = o.freqs;
        mean_coh.values.assign(o.coh.size(), 0.0);
      }
      for (std::size_t j = 0; j < o.coh.size(); ++j) mean_coh.values[j] += o.coh[j] / c.ensembles;
    }
    const double n_eff = detail::mean_of(ne);
    const double dt = c.dt * static_cast<double>(strides[ki]);
    const double f_eff = effective_nyquist(n_eff, dt);
    const double cross = mean_coh.crossing(0.5);
    res.rows.push_back({strides[ki], n_eff, f_eff, cross, cross / f_eff});
    res.freqs.push_back(mean_coh.freqs);
    res.coherence.push_back(mean_coh.values);
  }
  return res;
}

/// Contaminated bivariate tracks: plain expected-MSE selection against the
/// robust pipeline, and recovery of the outlier distribution.
struct RobustnessResult {
  struct Row {
    double alpha;
    double mse_clean_optimal;  // true-MSE optimum on the uncontaminated twin
    double mse_plain;          // expected MSE with the noise variance
    double mse_robust;         // robust pipeline (ranged expected MSE)
    double flag_precision;     // NaN when nothing was flagged
    std::size_t flagged;
    double median_alpha;
    double median_sigma_o;
    double no_outlier_fraction;
  };
  std::vector<Row> rows;

  const Row& at(double alpha) const {
    for (const auto& r : rows) {
      if (std::abs(r.alpha - alpha) < 1e-12) return r;
    }
    throw invalid_input("robustness: no such alpha");
  }

  std::string markdown() const {
    std::ostringstream os;
    os << "| alpha | clean optimum (m^2) | expected mse (m^2) | ranged mse (m^2) | flag precision | "
          "flagged | median alpha | median sigma_o (m) | no-outlier fraction |\n"
       << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      os << "| " << detail::format("%.2f", r.alpha) << " | " << detail::format("%.3g", r.mse_clean_optimal)
         << " | " << detail::format("%.4g", r.mse_plain) << " | " << detail::format("%.3g", r.mse_robust)
         << " | " << (std::isnan(r.flag_precision) ? std::string("n/a") : detail::format("%.3f", r.flag_precision))
         << " | " << r.flagged << " | " << detail::format("%.3f", r.median_alpha) << " | "
         << detail::format("%.1f", r.median_sigma_o) << " | " << detail::format("%.2f", r.no_outlier_fraction)
         << " |\n";
    }
    return os.str();
  }
};

inline RobustnessResult run_robustness(const ExperimentConfig& c, int slope = 2) {
  c.validate();
  const auto noise = c.noise_model();
  const auto outlier = NoiseModel::student_t(c.outlier_scale * noise.scale(), outlier_nu);
  const std::size_t na = c.alphas.size();
  const std::size_t total = na * static_cast<std::size_t>(c.ensembles);
  struct Out {
    double clean, plain, robust;
    std::size_t flagged, true_flags;
    double alpha, sigma_o;
    bool no_outliers;
  };
  std::vector<Out> outs(total);
  BivariateOptions bo;
  bo.smoothing.order = c.degree + 1;
  bo.smoothing.tension = c.tension;
  parallel_for(total, c.jobs, [&](std::size_t r) {
    const int e = static_cast<int>(r % c.ensembles);
    const double alpha = c.alphas[r / c.ensembles];
    const auto truth = matern_track(c.matern(slope, c.robust_samples, mix_seed(c.seed, 7, slope, e)));
    const std::uint64_t ns = mix_seed(c.seed, 8, slope, e);
    const auto clean = contaminate(truth, noise, 0.0, outlier, ns);
    const auto dirty = contaminate(truth, noise, alpha, outlier, ns);
    auto score = [](const BivariateFit& f) {
      return 0.5 * (mean_square_error(f.fitted_x(), f.track().truth_x) +
                    mean_square_error(f.fitted_y(), f.track().truth_y));
    };
    Out o{};
    BivariateFit fc(clean, noise, bo);
    fc.minimize(score);
    o.clean = score(fc);
    BivariateFit fp(dirty, noise, bo);
    fp.minimize_expected_mse();
    o.plain = score(fp);
    BivariateFit fr(dirty, noise, bo);
    const auto rr = robust_smooth(fr, noise, c.beta);
    o.robust = score(fr);
    for (std::size_t i = 0; i < dirty.size(); ++i) {
      if (rr.flags[i]) {
        ++o.flagged;
        o.true_flags += dirty.contaminated[i];
      }
    }
    o.alpha = rr.outliers.alpha;
    o.sigma_o = rr.outliers.sigma_o;
    o.no_outliers = rr.outliers.no_outliers;
    outs[r] = o;
  });
  RobustnessResult res;
  for (std::size_t ai = 0; ai < na; ++ai) {
    std::vector<double> clean, plain, robust, alpha, sigma;
    std::size_t flagged = 0, true_flags = 0, none = 0;
    for (int e = 0; e < c.ensembles; ++e) {
      const auto& o = outs[ai * c.ensembles + e];
      clean.push_back(o.clean);
      plain.push_back(o.plain);
      robust.push_back(o.robust);
      alpha.push_back(o.alpha);
      sigma.push_back(o.sigma_o);
      flagged += o.flagged;
      true_flags += o.true_flags;
      none += o.no_outliers;
    }
    res.rows.push_back({c.alphas[ai], detail::mean_of(clean), detail::mean_of(plain),
                        detail::mean_of(robust),
                        flagged ? static_cast<double>(true_flags) / static_cast<double>(flagged)
                                : std::numeric_limits<double>::quiet_NaN(),
                        flagged, median(alpha), median(sigma),
                        static_cast<double>(none) / static_cast<double>(c.ensembles)});
  }
  return res;
}

}  // namespace tspline

#endif  // TSPLINE_EXPERIMENT_HPP
