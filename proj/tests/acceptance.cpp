// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hmbayes/cli.hpp"
#include "hmbayes/config.hpp"
#include "hmbayes/error.hpp"
#include "hmbayes/experiment.hpp"
#include "hmbayes/fem.hpp"
#include "hmbayes/inference.hpp"
#include "hmbayes/io.hpp"
#include "hmbayes/randfield.hpp"

using namespace hmb;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kMomentTol = 0.01;
constexpr double kMomentSeconds = 5.0;
constexpr double kReconstructionTol = 1e-8;
constexpr int kTruncationRealizations = 100;
constexpr int kTruncationMaxOrder = 20;
constexpr int kTruncationCheckOrder = 7;
constexpr double kTruncationSeconds = 600.0;
constexpr double kSeriesTol = 0.01;
constexpr double kEquilibriumTol = 1e-12;
constexpr double kFluxTol = 1e-6;
constexpr double kVarianceLow = 0.95;
constexpr double kVarianceHigh = 1.05;
constexpr double kStandardErrors = 3.0;
constexpr double kRmseRatio = 0.5;
constexpr double kCoverage = 0.9;
constexpr double kDeskSeconds = 1800.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict moment_conversion() {
  const auto start = Clock::now();
  const PriorTable table = masonry_prior_table();
  Rng rng(1);
  std::normal_distribution<double> normal;
  const int n = 1000000;
  double worst = 0.0;
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    const LognormalMoments m = moments_to_gaussian(table[k].mean, table[k].stddev);
    double s = 0.0;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double q = std::exp(m.mu_g + m.sigma_g * normal(rng));
      s += q;
      ss += q * q;
    }
    const double mean = s / n;
    const double sd = std::sqrt((ss - n * mean * mean) / (n - 1));
    worst = std::max({worst, std::abs(mean / table[k].mean - 1.0), std::abs(sd / table[k].stddev - 1.0)});
  }
  const double t = seconds_since(start);
  return {worst < kMomentTol && t < kMomentSeconds,
          fmt("max relative moment error %.2e (< %.0e), %.2f s (< %.0f s)", worst, kMomentTol, t,
              kMomentSeconds)};
}

Verdict kle_correctness() {
  const ExperimentConfig cfg;
  const Mesh mesh = cfg.build_mesh();
  const auto points = mesh.centroids();
  const Eigen::MatrixXd c = assemble_covariance_matrix(points, cfg.correlation);
  const KleBasis basis = build_kle_basis(points, cfg.correlation, static_cast<Eigen::Index>(points.size()));
  const Eigen::MatrixXd rec =
      basis.eigenvectors * basis.eigenvalues.asDiagonal() * basis.eigenvectors.transpose();
  const double residual = (rec - c).norm() / c.norm();
  bool descending = true;
  for (Eigen::Index i = 0; i + 1 < basis.size(); ++i) {
    descending = descending && basis.eigenvalues[i] >= basis.eigenvalues[i + 1];
  }
  const bool positive = basis.eigenvalues.minCoeff() > 0.0;
  return {residual < kReconstructionTol && descending && positive && points.size() == 120,
          fmt("%zu points, residual %.2e (< %.0e), min eigenvalue %.3e, descending %s", points.size(),
              residual, kReconstructionTol, basis.eigenvalues.minCoeff(), descending ? "yes" : "no")};
}

double regression_slope(const std::vector<int>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

Verdict truncation_curves() {
  const auto start = Clock::now();
  const RunConfig run = preset_config("paper-desk");
  const ExperimentConfig& cfg = run.experiment;
  const KleBasis full = experiment_basis(cfg);
  std::vector<int> orders(kTruncationMaxOrder);
  std::iota(orders.begin(), orders.end(), 1);
  const TruncationCurve curve =
      truncation_error_curve(cfg, full, orders, kTruncationRealizations, true, run.truncation.seed);
  const double t = seconds_since(start);
  const double slope = regression_slope(curve.orders, curve.input_error);
  const auto k = static_cast<std::size_t>(kTruncationCheckOrder - 1);
  const double in7 = curve.input_error[k];
  const double out7 = curve.response_error[k];
  return {slope <= 0.0 && out7 < in7 && t < kTruncationSeconds,
          fmt("input slope %.3e (<= 0), M=7 response %.4f < input %.4f, %zu of %d realizations "
              "skipped after solver failure, %.0f s (< %.0f s)",
              slope, out7, in7, curve.response_failures, kTruncationRealizations, t,
              kTruncationSeconds)};
}

ElementCoefficients frozen_conduction(const MaterialParams&, const LocalState&) {
  ElementCoefficients c;
  c.heat_capacity = 1.485e6;
  c.conductivity = 0.3;
  c.moisture_capacity = 1.0;
  c.liquid_conduction = 1e-3;
  return c;
}

double series_error(int nx, double dt) {
  const double length = 0.5;
  const double t = 20.0 * kSecondsPerHour;
  const double alpha = 0.3 / 1.485e6;
  const Mesh mesh = build_mesh(length, 0.06, nx, 2);
  const HeatMoistureModel model(mesh, {{5.0, 0.5}, {24.0, 0.5}}, frozen_conduction);
  SolverConfig cfg;
  cfg.dt = dt;
  cfg.t_end = t;
  const Trajectory traj = model.solve(model.uniform_state({14.0, 0.5}), cfg,
                                      ParameterFields::uniform(MaterialParams{}, mesh.num_elements()),
                                      std::span(&t, 1));
  double err = 0.0;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const double x = mesh.nodes[static_cast<std::size_t>(i)].x1;
    double exact = 5.0 + 19.0 * x / length;
    for (int n = 1; n <= 400; ++n) {
      const double sign = n % 2 == 0 ? 1.0 : -1.0;
      const double kn = n * std::numbers::pi / length;
      exact += 2.0 / (n * std::numbers::pi) * (9.0 * (1.0 - sign) + 19.0 * sign) * std::sin(kn * x) *
               std::exp(-kn * kn * alpha * t);
    }
    err = std::max(err, std::abs(traj.states[0].theta[i] - exact));
  }
  return err / 19.0;
}

Verdict forward_solver() {
  const double coarse = series_error(21, 900.0);
  const double fine = series_error(41, 225.0);

  const ExperimentConfig cfg;
  const Mesh mesh = cfg.build_mesh();
  const KleBasis basis = experiment_basis(cfg).truncated(7);
  Rng rng(3);
  const Eigen::VectorXd xi = 0.5 * standard_normal(rng, LatentLayout{7}.size());
  const ParameterFields fields = realize_parameter_fields(
      basis, prior_moments(cfg.prior), std::span(xi.data(), static_cast<std::size_t>(xi.size())));

  const LocalState eq{20.0, 0.6};
  const HeatMoistureModel still(mesh, {eq, eq});
  SolverConfig short_run;
  short_run.t_end = 50 * kSecondsPerHour;
  const double t50 = short_run.t_end;
  const SimState s = still.solve(still.uniform_state(eq), short_run, fields, std::span(&t50, 1)).states[0];
  const double drift = std::max((s.theta.array() - eq.theta).abs().maxCoeff(),
                                (s.phi.array() - eq.phi).abs().maxCoeff());

  const HeatMoistureModel model(mesh, cfg.boundary);
  SolverConfig long_run;
  long_run.dt = 20 * kSecondsPerHour;
  long_run.t_end = 4000 * kSecondsPerHour;
  const double t_end = long_run.t_end;
  const SimState steady =
      model.solve(model.uniform_state(cfg.initial), long_run, fields, std::span(&t_end, 1)).states[0];
  const BoundaryFlux flux = model.boundary_heat_flux(fields, steady);
  const double imbalance = std::abs(flux.exterior + flux.interior) / std::abs(flux.interior);

  return {fine < kSeriesTol && fine <= coarse && drift < kEquilibriumTol && imbalance < kFluxTol,
          fmt("series error %.2e -> %.2e after refinement (< %.0e), equilibrium drift %.1e (< %.0e), "
              "flux imbalance %.1e (< %.0e)",
              coarse, fine, kSeriesTol, drift, kEquilibriumTol, imbalance, kFluxTol)};
}

Verdict sampler_statistics() {
  MhOptions opt;
  opt.n_samples = 100000;
  opt.proposal_scale = 2.4;
  opt.seed = 101;
  const Chain normal = metropolis_hastings(Eigen::VectorXd::Zero(1),
                                           [](std::span<const double> x) { return log_prior(x); }, opt);
  const ChainDiagnostics dn = chain_diagnostics(normal, 0);
  const double var = dn.stddev[0] * dn.stddev[0];

  // Prior N(0, 1), y = 2 xi, noise sd 0.5, z = 1: posterior N(8/17, 1/17).
  const GaussianLikelihood lik(Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 0.25), 0.0);
  const ForwardFn forward = [](std::span<const double> xi) { return Eigen::VectorXd::Constant(1, 2.0 * xi[0]); };
  opt.proposal_scale = 0.6;
  opt.seed = 202;
  const Chain toy = metropolis_hastings(
      Eigen::VectorXd::Zero(1), [&](std::span<const double> x) { return log_posterior(x, lik, forward); }, opt);
  const ChainDiagnostics dt = chain_diagnostics(toy, 1000);
  const double se = dt.stddev[0] / std::sqrt(dt.effective_sample_size[0]);
  const double dev = std::abs(dt.mean[0] - 8.0 / 17.0) / se;
  return {var >= kVarianceLow && var <= kVarianceHigh && dev <= kStandardErrors,
          fmt("N(0,1) variance %.4f in [%.2f, %.2f], conjugate mean %.4f vs %.4f (%.2f standard errors, <= %.0f)",
              var, kVarianceLow, kVarianceHigh, dt.mean[0], 8.0 / 17.0, dev, kStandardErrors)};
}

int run_desk_pipeline(const fs::path& out) {
  fs::remove_all(out);
  std::ostringstream sink;
  std::ostringstream err;
  const int code = run_cli({"pipeline", "--preset", "paper-desk", "--out", out.string()}, sink, err);
  if (code != kExitOk) {
    std::cerr << err.str();
  }
  return code;
}

Verdict desk_inference(const fs::path& out) {
  const auto start = Clock::now();
  const int code = run_desk_pipeline(out);
  const double t = seconds_since(start);
  if (code != kExitOk) {
    return {false, fmt("pipeline exited with code %d", code)};
  }
  const auto s = read_json(out / "summary.json");
  const double ratio = s["fields"]["lambda_0"]["rmse_ratio"].get<double>();
  const auto& b = s["bands"];
  const double coverage = b["coverage"].get<double>();
  const double pwt = b["posterior_width_theta"].get<double>();
  const double pwp = b["posterior_width_phi"].get<double>();
  const double rwt = b["prior_width_theta"].get<double>();
  const double rwp = b["prior_width_phi"].get<double>();
  const bool narrower = pwt < rwt && pwp < rwp;
  return {ratio <= kRmseRatio && coverage >= kCoverage && narrower && t <= kDeskSeconds,
          fmt("lambda_0 RMSE ratio %.3f (<= %.1f), band coverage %.3f (>= %.2f; theta %.3f, phi %.3f), "
              "mean width theta %.3g vs prior %.3g, phi %.3g vs prior %.3g, %.0f s (<= %.0f s)",
              ratio, kRmseRatio, coverage, kCoverage, b["coverage_theta"].get<double>(),
              b["coverage_phi"].get<double>(), pwt, rwt, pwp, rwp, t, kDeskSeconds)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism(const fs::path& first, const fs::path& second) {
  if (!fs::exists(first / "summary.json")) {
    return {false, "first desk run did not complete"};
  }
  const int code = run_desk_pipeline(second);
  if (code != kExitOk) {
    return {false, fmt("second pipeline exited with code %d", code)};
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::directory_iterator(first)) {
    if (e.path().extension() != ".csv") {
      continue;
    }
    ++compared;
    const fs::path other = second / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      differing.push_back(e.path().filename().string());
    }
  }
  std::string detail = fmt("%zu CSV files compared, %zu differ", compared, differing.size());
  for (const auto& d : differing) {
    detail += " " + d;
  }
  return {compared > 0 && differing.empty(), detail};
}

} // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_runs";
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "moment conversion", moment_conversion},
      {2, "KLE correctness", kle_correctness},
      {3, "truncation-error curves", truncation_curves},
      {4, "forward-solver verification", forward_solver},
      {5, "MH sampler statistics", sampler_statistics},
      {6, "desk-scale inference", [&] { return desk_inference(work / "desk_a"); }},
      {7, "determinism", [&] { return determinism(work / "desk_a", work / "desk_b"); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << v.detail
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
