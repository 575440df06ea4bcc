#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tspline/tspline.hpp"

namespace fs = std::filesystem;
using namespace tspline;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 2;
constexpr int exit_numerical = 3;
constexpr int exit_nonconvergence = 4;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r\"");
    const auto e = cell.find_last_not_of(" \t\r\"");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

// Epoch seconds, or ISO-8601 "YYYY-MM-DD[T ]HH:MM:SS[.fff][Z|+HH:MM]".
double parse_time(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end && *end == '\0' && end != s.c_str()) return v;
  std::tm tm{};
  int consumed = 0;
  double seconds = 0.0;
  if (std::sscanf(s.c_str(), "%d-%d-%d%*1[T ]%d:%d:%lf%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                  &tm.tm_min, &seconds, &consumed) < 6) {
    throw invalid_input("could not parse time '" + s + "'");
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  tm.tm_sec = 0;
  double offset = 0.0;
  const std::string zone = s.substr(static_cast<std::size_t>(consumed));
  if (!zone.empty() && zone != "Z") {
    int hh = 0, mm = 0;
    if (std::sscanf(zone.c_str() + 1, "%d:%d", &hh, &mm) < 1 || (zone[0] != '+' && zone[0] != '-')) {
      throw invalid_input("could not parse time zone in '" + s + "'");
    }
    offset = (zone[0] == '-' ? -1.0 : 1.0) * (hh * 3600.0 + mm * 60.0);
  }
  return static_cast<double>(timegm(&tm)) + seconds - offset;
}

TrackSeries read_track(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw invalid_input("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw invalid_input(path.string() + " is empty");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto ct = column("t");
  if (!ct) throw invalid_input("missing column 't'");
  TrackSeries track;
  std::optional<std::size_t> ca, cb;
  if (column("lat") && column("lon")) {
    track.geographic = true;
    ca = column("lat");
    cb = column("lon");
  } else if (column("x") && column("y")) {
    ca = column("x");
    cb = column("y");
  } else {
    throw invalid_input("expected columns t,lat,lon or t,x,y");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    const std::size_t need = std::max({*ct, *ca, *cb});
    if (cells.size() <= need) throw invalid_input("line " + std::to_string(line_no) + ": too few columns");
    try {
      track.times.push_back(parse_time(cells[*ct]));
      track.x.push_back(std::stod(cells[*ca]));
      track.y.push_back(std::stod(cells[*cb]));
    } catch (const std::logic_error&) {
      throw invalid_input("line " + std::to_string(line_no) + ": bad number");
    }
    if (!std::isfinite(track.x.back()) || !std::isfinite(track.y.back())) {
      throw invalid_input("line " + std::to_string(line_no) + ": non-finite coordinate");
    }
  }
  track.validate();
  return track;
}

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t value) {
  if (opt->count() > 0) return value;
  if (const char* env = std::getenv("TSPLINE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::logic_error&) {
      throw invalid_input("TSPLINE_SEED must be an unsigned integer");
    }
  }
  return value;
}

// "60", "60s", "2m" or "1h" as seconds.
double parse_duration(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::logic_error&) {
    throw invalid_input("bad duration '" + s + "'");
  }
  const std::string unit = s.substr(used);
  if (unit == "h") v *= 3600.0;
  else if (unit == "m" || unit == "min") v *= 60.0;
  else if (!unit.empty() && unit != "s") throw invalid_input("bad duration unit in '" + s + "'");
  if (!(v > 0.0)) throw invalid_input("duration must be positive");
  return v;
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

struct SmoothArgs {
  std::string input;
  std::string noise = "gps-default";
  int degree = 3;
  int tension = -1;
  double beta = 0.01;
  std::string interpolate;
  std::string output_dir = ".";
  std::string name;
  bool strict = false;
};

int run_smooth(const SmoothArgs& a) {
  const auto noise = parse_noise_model(a.noise);
  auto raw = read_track(a.input);
  std::optional<Projection> projection;
  TrackSeries track = raw;
  if (raw.geographic) {
    auto [projected, proj] = project_track(raw);
    track = std::move(projected);
    projection = proj;
  }
  if (track.size() < static_cast<std::size_t>(a.degree) + 3) {
    throw insufficient_data("need at least K+2 observations");
  }
  BivariateOptions options;
  options.smoothing.order = a.degree + 1;
  options.smoothing.tension = a.tension < 0 ? a.degree : a.tension;
  BivariateFit fit(track, noise, options);

  std::optional<RobustResult> robust;
  bool converged = true;
  if (a.beta > 0.0) {
    robust = robust_smooth(fit, noise, a.beta);
    converged = robust->converged;
  } else {
    fit.minimize_expected_mse();
  }
  converged = converged && fit.irls_converged();
  const auto m = fit.last_minimization();
  if (m && !m->bracketed) converged = false;

  const std::size_t n = track.size();
  const bool full_se = n <= 2000;
  const auto se_x = full_se ? fit.standard_errors(0) : fit.standard_errors_trace(0);
  const auto se_y = full_se ? fit.standard_errors(1) : fit.standard_errors_trace(1);

  const std::string name = a.name.empty() ? fs::path(a.input).stem().string() : a.name;
  fs::create_directories(a.output_dir);
  const fs::path csv_path = fs::path(a.output_dir) / (name + "_smoothed.csv");
  std::ofstream csv(csv_path);
  if (!csv) throw invalid_input("cannot write " + csv_path.string());
  csv << "t,x,y,lat,lon,se_x,se_y,outlier_flag\n";
  auto write_row = [&](double t, double se_xv, double se_yv, const std::string& flag) {
    const double x = fit.x(t), y = fit.y(t);
    std::string lat, lon;
    if (projection) {
      const auto [la, lo] = projection->inverse(x, y);
      lat = csv_number(la);
      lon = csv_number(lo);
    }
    csv << csv_number(t) << ',' << csv_number(x) << ',' << csv_number(y) << ',' << lat << ',' << lon << ','
        << csv_number(se_xv) << ',' << csv_number(se_yv) << ',' << flag << '\n';
  };
  // Resampled rows are merged with the observation rows. Their standard
  // errors are interpolated linearly between observations and they carry no
  // outlier flag.
  const double step = a.interpolate.empty() ? 0.0 : parse_duration(a.interpolate);
  std::size_t grid = 0;
  const double t0 = track.times.front();
  auto grid_time = [&](std::size_t g) { return t0 + static_cast<double>(g) * step; };
  for (std::size_t i = 0; i < n; ++i) {
    while (step > 0.0 && i > 0 && grid_time(grid) < track.times[i]) {
      const double t = grid_time(grid++);
      if (t <= track.times[i - 1]) continue;
      const double w = (t - track.times[i - 1]) / (track.times[i] - track.times[i - 1]);
      write_row(t, (1 - w) * se_x[i - 1] + w * se_x[i], (1 - w) * se_y[i - 1] + w * se_y[i], "");
    }
    write_row(track.times[i], se_x[i], se_y[i], robust ? std::to_string(int(robust->flags[i])) : "0");
  }

  const auto ess = fit.effective_sample_size();
  nlohmann::json report;
  report["input"] = a.input;
  report["observations"] = n;
  report["noise"] = noise.describe();
  report["degree"] = a.degree;
  report["tension"] = options.smoothing.tension;
  report["beta"] = a.beta;
  report["lambda"] = fit.lambda();
  report["n_eff_se"] = ess.n_eff_se;
  report["n_eff_var"] = std::isfinite(ess.n_eff_var) ? nlohmann::json(ess.n_eff_var) : nlohmann::json(nullptr);
  report["effective_nyquist_hz"] = effective_nyquist(ess.n_eff_se, median_interval(track.times));
  report["standard_errors"] = full_se ? "full" : "trace";
  report["converged"] = converged;
  if (robust) {
    report["alpha_hat"] = robust->outliers.alpha;
    report["sigma_o_hat"] = robust->outliers.sigma_o;
    report["no_outliers"] = robust->outliers.no_outliers;
    report["outliers_flagged"] = std::count(robust->flags.begin(), robust->flags.end(), 1);
    report["full_tension_lambda"] = robust->full_tension_lambda;
    report["robust_iterations"] = robust->iterations;
  } else {
    report["alpha_hat"] = nullptr;
    report["sigma_o_hat"] = nullptr;
  }
  if (projection) report["central_meridian"] = projection->central_meridian;
  const fs::path json_path = fs::path(a.output_dir) / (name + "_report.json");
  std::ofstream js(json_path);
  if (!js) throw invalid_input("cannot write " + json_path.string());
  js << report.dump(2) << '\n';

  std::cout << "wrote " << csv_path.string() << " and " << json_path.string() << '\n';
  if (!converged) {
    std::cerr << "warning: fit did not fully converge\n";
    if (a.strict) return exit_nonconvergence;
  }
  return exit_ok;
}

struct SynthArgs {
  std::size_t n = 1000;
  double dt = 30.0;
  double slope = 2.0;
  double u_rms = 0.2;
  double damping = 1.0 / 1800.0;
  std::string noise = "gps-default";
  double alpha = 0.0;
  double outlier_scale = 50.0;
  std::size_t stride = 1;
  std::uint64_t seed = 1;
  std::string output_dir = ".";
  std::string name = "synthetic";
};

int run_synth(const SynthArgs& a) {
  const auto noise = parse_noise_model(a.noise);
  MaternSpec spec;
  spec.u_rms = a.u_rms;
  spec.damping = a.damping;
  spec.slope = a.slope;
  spec.n = a.n * a.stride;
  spec.dt = a.dt;
  spec.seed = mix_seed(a.seed, 1);
  const auto outlier = NoiseModel::student_t(a.outlier_scale * noise.scale(), outlier_nu);
  const auto track = stride(contaminate(matern_track(spec), noise, a.alpha, outlier, mix_seed(a.seed, 2)), a.stride);
  fs::create_directories(a.output_dir);
  const fs::path path = fs::path(a.output_dir) / (a.name + ".csv");
  std::ofstream out(path);
  if (!out) throw invalid_input("cannot write " + path.string());
  out << "t,x,y,true_x,true_y,outlier\n";
  for (std::size_t i = 0; i < track.size(); ++i) {
    out << csv_number(track.times[i]) << ',' << csv_number(track.x[i]) << ',' << csv_number(track.y[i]) << ','
        << csv_number(track.truth_x[i]) << ',' << csv_number(track.truth_y[i]) << ','
        << int(track.contaminated[i]) << '\n';
  }
  std::cout << "wrote " << path.string() << '\n';
  return exit_ok;
}

struct ExperimentArgs {
  std::string which = "all";
  std::string config;
  std::optional<int> ensembles;
  std::optional<std::string> noise;
  unsigned jobs = 0;
  std::uint64_t seed = 1;
  std::string output_dir = ".";
};

int run_experiment(const ExperimentArgs& a, const CLI::Option* seed_opt, const CLI::Option* jobs_opt) {
  ExperimentConfig c;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw invalid_input("cannot open " + a.config);
    c.read(in);
  }
  if (a.ensembles) c.ensembles = *a.ensembles;
  if (a.noise) c.noise = *a.noise;
  if (jobs_opt->count() > 0) c.jobs = a.jobs;
  if (seed_opt->count() > 0 || std::getenv("TSPLINE_SEED")) c.seed = resolve_seed(seed_opt, a.seed);
  c.output_dir = a.output_dir;
  c.validate();
  fs::create_directories(c.output_dir);
  const fs::path dir(c.output_dir);
  {
    std::ofstream cfg(dir / "config.txt");
    c.write(cfg);
  }
  auto save = [&](const std::string& file, const std::string& text) {
    std::ofstream out(dir / file);
    out << text;
    std::cout << "## " << file << "\n\n" << text << '\n';
  };
  const bool all = a.which == "all";
  bool ran = false;
  if (all || a.which == "table1") {
    save("table1.md", run_table1(c).markdown());
    ran = true;
  }
  std::optional<FitTableResult> t2;
  const bool gamma = a.which == "gamma" || a.which == "gamma-fit";
  if (all || a.which == "table2" || gamma) {
    t2 = run_fit_table(c);
    if (all || a.which == "table2") {
      save("table2.md", t2->markdown());
      std::ofstream runs(dir / "table2_runs.csv");
      t2->write_runs_csv(runs);
    }
    if (all || gamma) save("gamma.md", fit_gamma_power_law(t2->runs).markdown());
    ran = true;
  }
  if (all || a.which == "table3") {
    auto c3 = c;
    c3.noise = c.t_noise;
    const auto t3 = run_fit_table(c3);
    save("table3.md", t3.markdown());
    std::ofstream runs(dir / "table3_runs.csv");
    t3.write_runs_csv(runs);
    ran = true;
  }
  if (all || a.which == "nyquist") {
    save("nyquist.md", run_nyquist(c, c.slopes.front(), {1, 10, 100}).markdown());
    ran = true;
  }
  if (all || a.which == "robustness") {
    auto c4 = c;
    c4.noise = c.t_noise;
    save("robustness.md", run_robustness(c4, c.slopes.front()).markdown());
    ran = true;
  }
  if (!ran) throw invalid_input("unknown experiment '" + a.which + "'");
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smoothing splines with tension for noisy trajectories"};
  app.require_subcommand(1);

  SmoothArgs sa;
  auto* smooth = app.add_subcommand("smooth", "Smooth a track from CSV (t,lat,lon or t,x,y)");
  smooth->add_option("input", sa.input, "input CSV")->required()->check(CLI::ExistingFile);
  smooth->add_option("--noise", sa.noise, "gaussian:SIGMA | student:SIGMA,NU | gps-default")
      ->capture_default_str();
  smooth->add_option("--order", sa.degree, "spline degree S")->capture_default_str()->check(CLI::Range(1, 5));
  smooth->add_option("--tension", sa.tension, "tension order T (default S)");
  smooth->add_option("--beta", sa.beta, "ranged expected MSE cutoff; 0 disables outlier handling")
      ->capture_default_str();
  smooth->add_option("--interpolate", sa.interpolate, "also write rows on a regular grid, e.g. 60s");
  smooth->add_option("--output-dir", sa.output_dir)->capture_default_str();
  smooth->add_option("--name", sa.name, "output file prefix (default: input stem)");
  smooth->add_flag("--strict", sa.strict, "exit with status 4 when the fit does not converge");

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Write a synthetic Matérn track as CSV");
  synth->add_option("--n", ya.n, "observations after striding")->capture_default_str();
  synth->add_option("--dt", ya.dt, "sampling interval (s)")->capture_default_str();
  synth->add_option("--slope", ya.slope, "spectral slope of the velocity")->capture_default_str();
  synth->add_option("--u-rms", ya.u_rms)->capture_default_str();
  synth->add_option("--damping", ya.damping)->capture_default_str();
  synth->add_option("--noise", ya.noise)->capture_default_str();
  synth->add_option("--alpha", ya.alpha, "outlier fraction")->capture_default_str();
  synth->add_option("--outlier-scale", ya.outlier_scale, "outlier t scale in noise scales")->capture_default_str();
  synth->add_option("--stride", ya.stride)->capture_default_str();
  auto* synth_seed = synth->add_option("--seed", ya.seed, "random seed (falls back to TSPLINE_SEED)");
  synth->add_option("--output-dir", ya.output_dir)->capture_default_str();
  synth->add_option("--name", ya.name)->capture_default_str();

  ExperimentArgs ea;
  auto* experiment = app.add_subcommand("experiment", "Run ensemble experiments and write markdown tables");
  experiment->add_option("which", ea.which, "table1 | table2 | table3 | gamma-fit | nyquist | robustness | all")
      ->capture_default_str();
  experiment->add_option("--config", ea.config, "key = value configuration file");
  experiment->add_option("--ensembles", ea.ensembles);
  experiment->add_option("--noise", ea.noise, "noise for tables 1, 2 and nyquist (t_noise in the config covers the rest)");
  auto* jobs_opt = experiment->add_option("--jobs", ea.jobs, "worker threads (0 = all cores)");
  auto* exp_seed = experiment->add_option("--seed", ea.seed, "random seed (falls back to TSPLINE_SEED)");
  experiment->add_option("--output-dir", ea.output_dir)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_invalid;
  }

  try {
    if (*smooth) return run_smooth(sa);
    if (*synth) {
      ya.seed = resolve_seed(synth_seed, ya.seed);
      return run_synth(ya);
    }
    return run_experiment(ea, exp_seed, jobs_opt);
  } catch (const invalid_input& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_invalid;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_numerical;
  }
}
