#include "hmbayes/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "hmbayes/config.hpp"
#include "hmbayes/error.hpp"
#include "hmbayes/io.hpp"

namespace hmb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string command;
  std::optional<fs::path> config;
  fs::path out = "run";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  std::optional<std::size_t> threads;
  std::optional<fs::path> xi;
  std::vector<double> times_h;
};

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string hours_label(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gh", seconds / kSecondsPerHour);
  return buf;
}

/// manifest.json in the output directory: resolved configuration, seeds and
/// per-stage artifacts with wall-clock timings.
class Manifest {
public:
  explicit Manifest(fs::path dir) : dir_(std::move(dir)) {
    if (fs::exists(path())) {
      j_ = read_json(path());
      if (!j_.is_object()) {
        throw DataError(path().string() + " is not a JSON object");
      }
    }
  }

  fs::path path() const { return dir_ / "manifest.json"; }
  const fs::path& dir() const { return dir_; }

  bool has_config() const { return j_.contains("config"); }
  const json& config() const { return j_.at("config"); }

  bool has_stage(const std::string& name) const {
    return j_.contains("stages") && j_["stages"].contains(name);
  }

  void require(const std::string& stage, const std::string& needed) const {
    if (!has_stage(needed)) {
      throw ConfigError("stage '" + stage + "' needs the artifacts of '" + needed + "' in " +
                        dir_.string() + "; run that stage first");
    }
    for (const auto& f : j_["stages"][needed]["files"]) {
      if (!fs::exists(dir_ / f.get<std::string>())) {
        throw ConfigError("artifact " + f.get<std::string>() + " of stage '" + needed +
                          "' is missing; rerun that stage");
      }
    }
  }

  // Starting the basis stage over discards every later stage.
  void reset() { j_ = json::object(); }

  void record(const std::string& stage, const RunConfig& cfg, const std::optional<fs::path>& cfg_path,
              const std::vector<std::string>& files, double seconds) {
    j_["tool"] = "hmbayes";
    j_["version"] = kVersion;
    j_["output_dir"] = fs::absolute(dir_).string();
    if (cfg_path) {
      j_["config_path"] = fs::absolute(*cfg_path).string();
    }
    j_["config"] = to_json(cfg);
    j_["seeds"] = j_["config"]["seeds"];
    j_["stages"][stage] = {{"files", files}, {"seconds", seconds}};
    write_json(path(), j_);
  }

private:
  fs::path dir_;
  json j_ = json::object();
};

json without_threads(json j) {
  j.erase("threads");
  return j;
}

RunConfig resolve_config(const Options& opt, const Manifest& manifest, bool first_stage) {
  RunConfig cfg;
  const bool explicit_config = opt.config || opt.preset || opt.seed;
  if (!first_stage && !explicit_config && manifest.has_config()) {
    const json& recorded = manifest.config();
    cfg = preset_config(recorded.value("preset", std::string("paper-full")));
    apply_json(cfg, recorded);
  } else {
    cfg = load_config(opt.config, opt.preset, opt.seed);
  }
  if (opt.threads) {
    cfg.experiment.threads = *opt.threads;
  }
  cfg.validate();
  if (!first_stage && explicit_config && manifest.has_config() &&
      without_threads(to_json(cfg)) != without_threads(manifest.config())) {
    throw ConfigError("configuration differs from the one recorded in " +
                      manifest.path().string() + "; rerun the pipeline from 'basis'");
  }
  return cfg;
}

KleBasis load_basis(const fs::path& dir, const ExperimentConfig& cfg) {
  const CsvTable values = read_csv(dir / "eigenvalues.csv");
  const CsvTable vectors = read_csv(dir / "eigenvectors.csv");
  const Mesh mesh = cfg.build_mesh();
  const auto n = static_cast<std::size_t>(mesh.num_elements());
  if (values.rows.size() != n || vectors.rows.size() != n || vectors.columns() != n + 3) {
    throw DataError("KLE basis files do not match a mesh of " + std::to_string(n) + " elements");
  }
  KleBasis basis;
  basis.eigenvalues.resize(static_cast<Eigen::Index>(n));
  basis.eigenvectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const std::size_t col = values.column("eigenvalue");
  for (std::size_t i = 0; i < n; ++i) {
    basis.eigenvalues[static_cast<Eigen::Index>(i)] = values.rows[i][col];
    for (std::size_t k = 0; k < n; ++k) {
      basis.eigenvectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          vectors.rows[i][k + 3];
    }
  }
  if (!basis.eigenvalues.allFinite() || !basis.eigenvectors.allFinite()) {
    throw DataError("KLE basis files contain non-finite values");
  }
  basis.grid = mesh.centroids();
  basis.order = static_cast<Eigen::Index>(n);
  return basis;
}

Eigen::VectorXd read_latent(const fs::path& path) {
  if (!fs::exists(path)) {
    throw ConfigError("latent vector file " + path.string() + " does not exist");
  }
  const CsvTable t = read_csv(path);
  const std::size_t col = t.column("xi");
  Eigen::VectorXd xi(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    xi[static_cast<Eigen::Index>(i)] = t.rows[i][col];
  }
  if (xi.size() == 0 || !xi.allFinite()) {
    throw DataError(path.string() + " holds no finite latent vector");
  }
  return xi;
}

void write_latent(const fs::path& path, const Eigen::VectorXd& xi) {
  CsvTable t{{"xi"}, {}};
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    t.rows.push_back({xi[i]});
  }
  write_csv(path, t);
}

void write_state(const fs::path& path, const Mesh& mesh, const SimState& s) {
  CsvTable t{{"node", "x1", "x2", "theta", "phi"}, {}};
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const auto& p = mesh.nodes[static_cast<std::size_t>(i)];
    t.rows.push_back({static_cast<double>(i), p.x1, p.x2, s.theta[i], s.phi[i]});
  }
  write_csv(path, t);
}

// ---- stages ---------------------------------------------------------------

void stage_basis(const RunConfig& cfg, Manifest& manifest, const Options& opt, std::ostream& out) {
  const Stopwatch clock;
  const ExperimentConfig& e = cfg.experiment;
  const KleBasis basis = experiment_basis(e);
  const auto n = basis.size();

  CsvTable values{{"mode", "eigenvalue", "energy_fraction"}, {}};
  for (Eigen::Index i = 0; i < n; ++i) {
    values.rows.push_back({static_cast<double>(i + 1), basis.eigenvalues[i],
                           basis.energy_fraction(i + 1)});
  }
  write_csv(manifest.dir() / "eigenvalues.csv", values);

  CsvTable vectors{{"element", "x1", "x2"}, {}};
  for (Eigen::Index k = 0; k < n; ++k) {
    vectors.header.push_back("psi_" + std::to_string(k + 1));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point2& c = basis.grid[static_cast<std::size_t>(i)];
    std::vector<double> row{static_cast<double>(i), c.x1, c.x2};
    for (Eigen::Index k = 0; k < n; ++k) {
      row.push_back(basis.eigenvectors(i, k));
    }
    vectors.rows.push_back(std::move(row));
  }
  write_csv(manifest.dir() / "eigenvectors.csv", vectors);

  std::vector<int> orders;
  for (int m = 1; m <= cfg.truncation.max_order; ++m) {
    orders.push_back(m);
  }
  const TruncationCurve curve = truncation_error_curve(
      e, basis, orders, cfg.truncation.realizations, cfg.truncation.responses, cfg.truncation.seed);
  CsvTable trunc{{"order", "input_error"}, {}};
  if (cfg.truncation.responses) {
    trunc.header.push_back("response_error");
  }
  for (std::size_t i = 0; i < orders.size(); ++i) {
    std::vector<double> row{static_cast<double>(orders[i]), curve.input_error[i]};
    if (cfg.truncation.responses) {
      row.push_back(curve.response_error[i]);
    }
    trunc.rows.push_back(std::move(row));
  }
  write_csv(manifest.dir() / "truncation_error.csv", trunc);
  if (curve.response_failures > 0) {
    out << "basis: " << curve.response_failures << " of " << cfg.truncation.realizations
        << " truncation realizations skipped after a failed forward solve\n";
  }

  char line[160];
  std::snprintf(line, sizeof line, "basis: %lld modes, first %d capture %.2f%% of the variance\n",
                static_cast<long long>(n), e.kle_order, 100.0 * basis.energy_fraction(e.kle_order));
  out << line;
  manifest.reset();
  manifest.record("basis", cfg, opt.config,
                  {"eigenvalues.csv", "eigenvectors.csv", "truncation_error.csv"}, clock.seconds());
}

void stage_forward(const RunConfig& cfg, Manifest& manifest, const Options& opt, std::ostream& out) {
  const ExperimentConfig& e = cfg.experiment;
  const KleBasis full = experiment_basis(e);
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(LatentLayout{e.kle_order}.size());
  if (opt.xi) {
    xi = read_latent(*opt.xi);
  }
  KleBasis basis;
  if (xi.size() == LatentLayout{e.kle_order}.size()) {
    basis = full.truncated(e.kle_order);
  } else if (xi.size() == LatentLayout{full.size()}.size()) {
    basis = full;
  } else {
    throw DataError("latent vector has " + std::to_string(xi.size()) + " entries; expected " +
                    std::to_string(LatentLayout{e.kle_order}.size()) + " or " +
                    std::to_string(LatentLayout{full.size()}.size()));
  }
  std::vector<double> times;
  for (double h : opt.times_h) {
    times.push_back(h * kSecondsPerHour);
  }
  if (times.empty()) {
    times = e.observation.times;
  }
  for (double t : times) {
    if (!(t >= 0.0) || t > e.solver.t_end) {
      throw ConfigError("record time " + hours_label(t) + " lies outside [0, t_end]");
    }
  }
  const ForwardModel model(e, basis);
  const Stopwatch clock;
  const Trajectory traj = model.trajectory(std::span<const double>(xi.data(), xi.size()), times);
  const double solve_seconds = clock.seconds();

  std::vector<std::string> files;
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const std::string name = "trajectory_" + hours_label(traj.times[k]) + ".csv";
    write_state(manifest.dir() / name, model.model().mesh(), traj.states[k]);
    files.push_back(name);
  }
  char line[160];
  std::snprintf(line, sizeof line, "forward: one simulation of %.0f h took %.3f s\n",
                traj.times.back() / kSecondsPerHour, solve_seconds);
  out << line;
  manifest.record("forward", cfg, opt.config, files, solve_seconds);
}

void stage_observe(const RunConfig& cfg, Manifest& manifest, const Options& opt, std::ostream& out) {
  manifest.require("observe", "basis");
  const Stopwatch clock;
  const ExperimentConfig& e = cfg.experiment;
  const KleBasis full = load_basis(manifest.dir(), e);
  const Eigen::VectorXd ref_xi = draw_reference_latent(e, full.size());
  const ForwardModel reference(e, full);
  const ObservationSet obs =
      synthesize_observations(e, reference, std::span<const double>(ref_xi.data(), ref_xi.size()));

  const auto ns = static_cast<Eigen::Index>(obs.sensors.size());
  CsvTable t{{"index", "time_h", "sensor", "quantity", "x1", "x2", "noiseless", "value"}, {}};
  for (Eigen::Index ti = 0; ti < static_cast<Eigen::Index>(obs.times.size()); ++ti) {
    for (Eigen::Index s = 0; s < ns; ++s) {
      for (Quantity q : {Quantity::theta, Quantity::phi}) {
        const Eigen::Index i = observation_index(ti, s, ns, q);
        const Point2& p = obs.sensors[static_cast<std::size_t>(s)];
        t.rows.push_back({static_cast<double>(i), obs.times[static_cast<std::size_t>(ti)] / kSecondsPerHour,
                          static_cast<double>(s), static_cast<double>(q), p.x1, p.x2,
                          obs.noiseless[i], obs.values[i]});
      }
    }
  }
  write_csv(manifest.dir() / "observations.csv", t);
  write_matrix_csv(manifest.dir() / "replicates.csv", obs.replicates, "y");
  write_matrix_csv(manifest.dir() / "cobs.csv", obs.covariance, "c");
  write_latent(manifest.dir() / "reference_latent.csv", ref_xi);

  out << "observe: " << obs.size() << " observations from " << obs.replicates.rows()
      << " replicates\n";
  manifest.record("observe", cfg, opt.config,
                  {"observations.csv", "replicates.csv", "cobs.csv", "reference_latent.csv"},
                  clock.seconds());
}

ObservationSet load_observations(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "observations.csv");
  ObservationSet obs;
  const std::size_t idx = t.column("index");
  const std::size_t val = t.column("value");
  const std::size_t clean = t.column("noiseless");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  obs.values = Eigen::VectorXd::Zero(n);
  obs.noiseless = Eigen::VectorXd::Zero(n);
  for (const auto& row : t.rows) {
    const double i = row[idx];
    if (!(i >= 0.0) || i >= static_cast<double>(n) || i != std::floor(i)) {
      throw DataError("observations.csv has an invalid index " + format_number(i));
    }
    obs.values[static_cast<Eigen::Index>(i)] = row[val];
    obs.noiseless[static_cast<Eigen::Index>(i)] = row[clean];
  }
  obs.covariance = read_matrix_csv(dir / "cobs.csv");
  if (obs.covariance.rows() != n || obs.covariance.cols() != n) {
    throw DataError("cobs.csv is " + std::to_string(obs.covariance.rows()) + "x" +
                    std::to_string(obs.covariance.cols()) + ", expected " + std::to_string(n) +
                    "x" + std::to_string(n));
  }
  return obs;
}

void stage_infer(const RunConfig& cfg, Manifest& manifest, const Options& opt, std::ostream& out,
                 std::ostream& err) {
  manifest.require("infer", "observe");
  const Stopwatch clock;
  const ExperimentConfig& e = cfg.experiment;
  const KleBasis full = load_basis(manifest.dir(), e);
  const ObservationSet obs = load_observations(manifest.dir());
  const ForwardModel model(e, full.truncated(e.kle_order));

  std::mutex mutex;
  const ProgressFn progress = [&](std::size_t chain, std::size_t step, double acc) {
    const std::lock_guard lock(mutex);
    char line[120];
    std::snprintf(line, sizeof line, "infer: chain %zu step %zu/%zu acceptance %.3f\n", chain, step,
                  e.mcmc.n_samples, acc);
    err << line << std::flush;
  };
  const std::vector<Chain> chains = run_inference(e, model, obs, progress);

  const Eigen::Index dim = model.latent_size();
  CsvTable t{{"chain", "step", "accepted", "logpost"}, {}};
  for (Eigen::Index k = 0; k < dim; ++k) {
    t.header.push_back("xi_" + std::to_string(k + 1));
  }
  json diag = json::object();
  diag["burn_in_fraction"] = e.mcmc.burn_in_fraction;
  diag["chains"] = json::array();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const Chain& ch = chains[c];
    for (std::size_t i = 0; i < ch.size(); ++i) {
      std::vector<double> row{static_cast<double>(c), static_cast<double>(i + 1),
                              static_cast<double>(ch.accepted[i]), ch.logpost[i]};
      for (Eigen::Index k = 0; k < dim; ++k) {
        row.push_back(ch.samples[i][k]);
      }
      t.rows.push_back(std::move(row));
    }
    const ChainDiagnostics d = chain_diagnostics(ch, e.burn_in(ch.size()));
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    diag["chains"].push_back({{"seed", ch.seed},
                              {"samples", ch.size()},
                              {"burn_in", d.burn_in},
                              {"acceptance_rate", ch.acceptance_rate()},
                              {"acceptance_rate_retained", d.acceptance_rate},
                              {"proposal_scale", ch.proposal_scale},
                              {"failed_evaluations", ch.failures},
                              {"mean", vec(d.mean)},
                              {"std", vec(d.stddev)},
                              {"autocorrelation_time", vec(d.autocorrelation_time)},
                              {"effective_sample_size", vec(d.effective_sample_size)}});
  }
  if (chains.size() > 1 && e.burn_in(chains.front().size()) + 2 <= chains.front().size()) {
    const Eigen::VectorXd rhat = gelman_rubin(chains, e.burn_in(chains.front().size()));
    diag["rhat"] = std::vector<double>(rhat.data(), rhat.data() + rhat.size());
  }
  write_csv(manifest.dir() / "chain.csv", t);
  write_json(manifest.dir() / "diagnostics.json", diag);

  const double seconds = clock.seconds();
  char line[160];
  std::snprintf(line, sizeof line, "infer: %zu chain(s) x %zu samples, acceptance %.3f, %.1f s\n",
                chains.size(), e.mcmc.n_samples, chains.front().acceptance_rate(), seconds);
  out << line;
  manifest.record("infer", cfg, opt.config, {"chain.csv", "diagnostics.json"}, seconds);
}

std::vector<Chain> load_chains(const fs::path& path, Eigen::Index dim) {
  const CsvTable t = read_csv(path);
  if (t.columns() != static_cast<std::size_t>(dim) + 4) {
    throw DataError("chain.csv has " + std::to_string(t.columns()) + " columns, expected " +
                    std::to_string(dim + 4));
  }
  std::vector<Chain> chains;
  for (const auto& row : t.rows) {
    const double c = row[0];
    if (!(c >= 0.0) || c != std::floor(c) || c > static_cast<double>(chains.size())) {
      throw DataError("chain.csv rows are not grouped by chain index");
    }
    if (static_cast<std::size_t>(c) == chains.size()) {
      chains.emplace_back();
    }
    Chain& ch = chains[static_cast<std::size_t>(c)];
    Eigen::VectorXd xi(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      xi[k] = row[static_cast<std::size_t>(k) + 4];
    }
    if (!xi.allFinite()) {
      throw DataError("chain.csv holds a non-finite latent sample");
    }
    ch.samples.push_back(std::move(xi));
    ch.accepted.push_back(row[2] != 0.0 ? 1 : 0);
    ch.logpost.push_back(row[3]);
  }
  if (chains.empty()) {
    throw DataError("chain.csv holds no samples");
  }
  return chains;
}

void write_band_csv(const fs::path& path, const ResponseEnvelopes& env, const Eigen::MatrixXd& ref,
                    const Band& post, const Band& prior, const std::vector<Point2>& probes) {
  CsvTable t{{"time_h", "probe", "x1", "x2", "reference", "posterior_q05", "posterior_q50",
              "posterior_q95", "prior_q05", "prior_q50", "prior_q95"},
             {}};
  for (std::size_t k = 0; k < env.times.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    for (Eigen::Index s = 0; s < ref.cols(); ++s) {
      const Point2& p = probes[static_cast<std::size_t>(s)];
      t.rows.push_back({env.times[k] / kSecondsPerHour, static_cast<double>(s), p.x1, p.x2,
                        ref(r, s), post.q05(r, s), post.q50(r, s), post.q95(r, s),
                        prior.q05(r, s), prior.q50(r, s), prior.q95(r, s)});
    }
  }
  write_csv(path, t);
}

void stage_summarize(const RunConfig& cfg, Manifest& manifest, const Options& opt, std::ostream& out) {
  manifest.require("summarize", "infer");
  const Stopwatch clock;
  const ExperimentConfig& e = cfg.experiment;
  const fs::path& dir = manifest.dir();
  const KleBasis full = load_basis(dir, e);
  const ForwardModel model(e, full.truncated(e.kle_order));
  const std::vector<Chain> chains = load_chains(dir / "chain.csv", model.latent_size());
  const Eigen::VectorXd ref_xi = read_latent(dir / "reference_latent.csv");
  if (ref_xi.size() != LatentLayout{full.size()}.size()) {
    throw DataError("reference_latent.csv does not match the KLE basis");
  }
  const PosteriorSummary s = summarize_posterior(
      e, full, model, std::span<const double>(ref_xi.data(), ref_xi.size()), chains);

  std::vector<std::string> files;
  const Mesh& mesh = model.model().mesh();
  const auto centroids = mesh.centroids();
  json fields = json::object();
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    const std::string name = std::string(kParamNames[k]);
    CsvTable t{{"element", "x1", "x2", "reference", "posterior_mean", "prior_mean", "posterior_q05",
                "posterior_q50", "posterior_q95"},
               {}};
    for (Eigen::Index i = 0; i < s.reference.size(); ++i) {
      const Point2& c = centroids[static_cast<std::size_t>(i)];
      t.rows.push_back({static_cast<double>(i), c.x1, c.x2, s.reference.values[k][i],
                        s.posterior_mean.values[k][i], s.prior_mean.values[k][i],
                        s.posterior_quantiles[k](i, 0), s.posterior_quantiles[k](i, 1),
                        s.posterior_quantiles[k](i, 2)});
    }
    write_csv(dir / ("fields_" + name + ".csv"), t);
    files.push_back("fields_" + name + ".csv");
    fields[name] = {{"posterior_rmse", s.posterior_error[k].rmse},
                    {"prior_rmse", s.prior_error[k].rmse},
                    {"rmse_ratio", s.posterior_error[k].rmse / s.prior_error[k].rmse},
                    {"posterior_mean_abs_rel", s.posterior_error[k].mean_abs_rel},
                    {"prior_mean_abs_rel", s.prior_error[k].mean_abs_rel}};
  }

  const auto probes = e.sensor_points();
  const auto& env = s.envelopes;
  write_band_csv(dir / "envelopes_theta.csv", env, env.reference_theta, env.posterior_theta,
                 env.prior_theta, probes);
  write_band_csv(dir / "envelopes_phi.csv", env, env.reference_phi, env.posterior_phi,
                 env.prior_phi, probes);
  files.insert(files.end(), {"envelopes_theta.csv", "envelopes_phi.csv"});

  CsvTable cut{{"x1", "reference"}, {}};
  for (std::size_t j = 0; j < s.lambda_cut.posterior.size(); ++j) {
    cut.header.push_back("posterior_" + std::to_string(j + 1));
  }
  for (std::size_t j = 0; j < s.lambda_cut.prior.size(); ++j) {
    cut.header.push_back("prior_" + std::to_string(j + 1));
  }
  for (std::size_t i = 0; i < s.lambda_cut.x1.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    std::vector<double> row{s.lambda_cut.x1[i], s.lambda_cut.reference[ii]};
    for (const auto& v : s.lambda_cut.posterior) {
      row.push_back(v[ii]);
    }
    for (const auto& v : s.lambda_cut.prior) {
      row.push_back(v[ii]);
    }
    cut.rows.push_back(std::move(row));
  }
  write_csv(dir / "lambda_cut.csv", cut);

  CsvTable fin{{"node", "x1", "x2", "theta_error", "phi_error"}, {}};
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const Point2& p = mesh.nodes[static_cast<std::size_t>(i)];
    fin.rows.push_back({static_cast<double>(i), p.x1, p.x2, s.final_theta_error[i],
                        s.final_phi_error[i]});
  }
  write_csv(dir / "final_response_error.csv", fin);
  files.insert(files.end(), {"lambda_cut.csv", "final_response_error.csv"});

  const json summary = {
      {"retained_samples", s.retained_samples},
      {"posterior_responses", s.posterior_responses},
      {"prior_responses", s.prior_responses},
      {"prior_failures", s.prior_failures},
      {"fields", fields},
      {"bands",
       {{"coverage", s.bands.coverage},
        {"coverage_theta", s.bands.coverage_theta},
        {"coverage_phi", s.bands.coverage_phi},
        {"posterior_width_theta", s.bands.posterior_width_theta},
        {"posterior_width_phi", s.bands.posterior_width_phi},
        {"prior_width_theta", s.bands.prior_width_theta},
        {"prior_width_phi", s.bands.prior_width_phi}}},
      {"final_response_error",
       {{"theta_max_abs", s.final_theta_error.cwiseAbs().maxCoeff()},
        {"phi_max_abs", s.final_phi_error.cwiseAbs().maxCoeff()}}},
  };
  write_json(dir / "summary.json", summary);
  files.push_back("summary.json");

  const auto lam = static_cast<std::size_t>(Param::lambda_0);
  char line[200];
  std::snprintf(line, sizeof line,
                "summarize: lambda_0 RMSE posterior %.4g vs prior %.4g, band coverage %.3f\n",
                s.posterior_error[lam].rmse, s.prior_error[lam].rmse, s.bands.coverage);
  out << line;
  manifest.record("summarize", cfg, opt.config, files, clock.seconds());
}

int dispatch(const Options& opt, std::ostream& out, std::ostream& err) {
  fs::create_directories(opt.out);
  Manifest manifest(opt.out);
  const bool first = opt.command == "basis" || opt.command == "pipeline";
  const RunConfig cfg = resolve_config(opt, manifest, first);
  if (opt.command == "basis") {
    stage_basis(cfg, manifest, opt, out);
  } else if (opt.command == "forward") {
    stage_forward(cfg, manifest, opt, out);
  } else if (opt.command == "observe") {
    stage_observe(cfg, manifest, opt, out);
  } else if (opt.command == "infer") {
    stage_infer(cfg, manifest, opt, out, err);
  } else if (opt.command == "summarize") {
    stage_summarize(cfg, manifest, opt, out);
  } else if (opt.command == "pipeline") {
    stage_basis(cfg, manifest, opt, out);
    stage_observe(cfg, manifest, opt, out);
    stage_infer(cfg, manifest, opt, out, err);
    stage_summarize(cfg, manifest, opt, out);
  }
  return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian identification of heterogeneous heat and moisture parameters", "hmbayes"};
  app.require_subcommand(1);
  Options opt;
  std::string config_path;
  std::string out_dir = opt.out.string();
  std::uint64_t seed = 0;
  std::string preset;
  std::size_t threads = 1;
  std::string xi_path;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration overlaid on the preset");
    sub->add_option("--out", out_dir, "artifact directory")->capture_default_str();
    sub->add_option("--seed", seed, "master seed from which all stage seeds are derived");
    sub->add_option("--preset", preset, "paper-full or paper-desk");
    sub->add_option("--threads", threads, "worker threads for chains and replays");
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"basis", "KLE eigenpairs and truncation-error curves"},
      {"forward", "single forward simulation for a latent vector"},
      {"observe", "reference response and noisy virtual measurements"},
      {"infer", "Metropolis-Hastings sampling of the posterior"},
      {"summarize", "posterior fields, response envelopes and error metrics"},
      {"pipeline", "basis, observe, infer and summarize in sequence"},
  };
  std::vector<double> times_h;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    common(sub);
    if (name == "forward") {
      sub->add_option("--xi", xi_path, "CSV with a single 'xi' column (default: all zeros)");
      sub->add_option("--times", times_h, "record times in hours (default: measurement times)");
    }
  }

  std::vector<std::string> argv_store{"hmbayes"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) {
    argv.push_back(a.data());
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    for (const auto* sub : app.get_subcommands()) {
      out << sub->help();
    }
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  for (const auto* sub : app.get_subcommands()) {
    opt.command = sub->get_name();
    if (sub->count("--config")) opt.config = config_path;
    if (sub->count("--seed")) opt.seed = seed;
    if (sub->count("--preset")) opt.preset = preset;
    if (sub->count("--threads")) opt.threads = threads;
    if (sub->get_option_no_throw("--xi") && sub->count("--xi")) opt.xi = xi_path;
  }
  opt.out = out_dir;
  opt.times_h = times_h;

  try {
    return dispatch(opt, out, err);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergedStepError& e) {
    char line[200];
    std::snprintf(line, sizeof line,
                  "numerical failure: %s (t = %.0f s, %d Picard sweeps, last increment %.3g)\n",
                  e.what(), e.time(), e.iterations(), e.last_increment());
    err << line;
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

} // namespace hmb
