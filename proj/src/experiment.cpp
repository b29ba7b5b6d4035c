#include "hmbayes/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "hmbayes/error.hpp"
#include "hmbayes/parallel.hpp"

namespace hmb {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

std::vector<double> envelope_times(const ExperimentConfig& config) {
  std::vector<double> times;
  const double end = config.solver.t_end;
  const double step = config.summary.envelope_interval;
  for (int k = 0;; ++k) {
    const double t = k * step;
    if (t >= end - 1e-9 * step) {
      break;
    }
    times.push_back(t);
  }
  times.push_back(end);
  return times;
}

// Evenly spaced picks of `count` items out of `total` (all of them if fewer).
std::vector<std::size_t> thinned_indices(std::size_t total, std::size_t count) {
  count = std::min(count, total);
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(i * total / count);
  }
  return out;
}

Band band_of(const std::vector<Eigen::MatrixXd>& samples, Eigen::Index rows, Eigen::Index cols) {
  Band band{Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols),
            Eigen::MatrixXd::Zero(rows, cols)};
  if (samples.empty()) {
    return band;
  }
  std::vector<double> values(samples.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (std::size_t k = 0; k < samples.size(); ++k) {
        values[k] = samples[k](r, c);
      }
      band.q05(r, c) = quantile(values, 0.05);
      band.q50(r, c) = quantile(values, 0.50);
      band.q95(r, c) = quantile(values, 0.95);
    }
  }
  return band;
}

struct ProbeResponse {
  bool ok = false;
  Eigen::MatrixXd theta;  // checkpoints x probes
  Eigen::MatrixXd phi;
  Eigen::VectorXd final_theta;
  Eigen::VectorXd final_phi;
};

ProbeResponse probe_response(const ForwardModel& model, std::span<const double> xi,
                             std::span<const double> times) {
  ProbeResponse out;
  try {
    const Trajectory traj = model.trajectory(xi, times);
    const auto& sensors = model.sensors();
    const auto nt = static_cast<Eigen::Index>(traj.states.size());
    const auto ns = static_cast<Eigen::Index>(sensors.size());
    out.theta.resize(nt, ns);
    out.phi.resize(nt, ns);
    for (Eigen::Index t = 0; t < nt; ++t) {
      for (Eigen::Index s = 0; s < ns; ++s) {
        out.theta(t, s) = sensors.interpolate(traj.states[t].theta, static_cast<std::size_t>(s));
        out.phi(t, s) = sensors.interpolate(traj.states[t].phi, static_cast<std::size_t>(s));
      }
    }
    out.final_theta = traj.states.back().theta;
    out.final_phi = traj.states.back().phi;
    out.ok = true;
  } catch (const NumericalError&) {
    out.ok = false;
  }
  return out;
}

Eigen::VectorXd stacked_response(const SimState& s) {
  Eigen::VectorXd v(s.theta.size() + s.phi.size());
  v << s.theta, s.phi;
  return v;
}

} // namespace

PriorTable masonry_prior_table() {
  return {{{200.0, 40.0},
           {100.0, 10.0},
           {0.3, 0.1},
           {10.0, 2.0},
           {12.0, 5.0},
           {0.6, 0.2},
           {900.0, 100.0},
           {1650.0, 50.0}}};
}

PriorMoments prior_moments(const PriorTable& table) {
  PriorMoments m;
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    m[k] = moments_to_gaussian(table[k].mean, table[k].stddev);
  }
  return m;
}

std::vector<Point2> default_sensor_layout(const GeometryConfig& geometry) {
  std::vector<Point2> sensors;
  for (double column : {1.0 / 3.0, 2.0 / 3.0}) {
    for (int k = 0; k < 7; ++k) {
      sensors.push_back({column * geometry.width, geometry.height * (k + 1) / 8.0});
    }
  }
  return sensors;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(geometry.width > 0.0) || !(geometry.height > 0.0)) fail("geometry dimensions must be positive");
  if (geometry.nx < 2 || geometry.ny < 2) fail("mesh needs at least 2 nodes per direction");
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    if (!(prior[k].mean > 0.0) || !(prior[k].stddev >= 0.0)) {
      fail("prior of " + std::string(kParamNames[k]) + " needs mean > 0 and std >= 0");
    }
  }
  if (!(prior[0].mean * 0.8 > prior[1].mean)) fail("prior means need w_80 < 0.8 w_f");
  if (!(correlation.l_x1 > 0.0) || !(correlation.l_x2 > 0.0)) fail("correlation lengths must be positive");
  const int n_elements = 2 * (geometry.nx - 1) * (geometry.ny - 1);
  if (kle_order < 1 || kle_order > n_elements) {
    fail("kle_order " + std::to_string(kle_order) + " outside [1, " + std::to_string(n_elements) + "]");
  }
  solver.validate();
  for (const LocalState* s : {&initial, &boundary.exterior, &boundary.interior}) {
    if (!(s->phi > 0.0 && s->phi < 1.0)) fail("relative humidity must lie in (0, 1)");
    if (!(s->theta > -234.18)) fail("temperature below the saturation-pressure domain");
  }
  if (observation.times.empty()) fail("at least one measurement time is required");
  for (double t : observation.times) {
    if (!(t > 0.0) || t > solver.t_end) fail("measurement times must lie in (0, t_end]");
  }
  if (!(observation.sigma_theta > 0.0) || !(observation.sigma_phi > 0.0)) fail("noise levels must be positive");
  if (observation.replicates < 2) fail("at least two replicates are needed for a covariance");
  if (!(observation.cobs_regularization >= 0.0)) fail("covariance regularization must be non-negative");
  for (const Point2& p : observation.sensors) {
    if (p.x1 < 0.0 || p.x1 > geometry.width || p.x2 < 0.0 || p.x2 > geometry.height) {
      fail("sensor outside the domain");
    }
  }
  if (mcmc.n_samples < 1) fail("mcmc.n_samples must be at least 1");
  if (!(mcmc.proposal_scale > 0.0)) fail("mcmc.proposal_scale must be positive");
  if (!(mcmc.burn_in_fraction >= 0.0 && mcmc.burn_in_fraction < 1.0)) fail("burn-in fraction must lie in [0, 1)");
  if (mcmc.n_chains < 1) fail("mcmc.n_chains must be at least 1");
  if (!(summary.envelope_interval > 0.0)) fail("envelope interval must be positive");
  if (summary.cut_x2 < 0.0 || summary.cut_x2 > geometry.height) fail("cut line outside the domain");
  if (summary.cut_points < 2) fail("cut needs at least two points");
  if (threads < 1) fail("threads must be at least 1");
}

Mesh ExperimentConfig::build_mesh() const {
  return hmb::build_mesh(geometry.width, geometry.height, geometry.nx, geometry.ny);
}

std::vector<Point2> ExperimentConfig::sensor_points() const {
  return observation.sensors.empty() ? default_sensor_layout(geometry) : observation.sensors;
}

std::size_t ExperimentConfig::burn_in(std::size_t chain_length) const {
  if (chain_length == 0) {
    return 0;
  }
  const auto b = static_cast<std::size_t>(mcmc.burn_in_fraction * static_cast<double>(chain_length));
  return std::min(b, chain_length - 1);
}

SensorOperator::SensorOperator(const Mesh& mesh, std::vector<Point2> sensors)
    : sensors_(std::move(sensors)) {
  for (const Point2& p : sensors_) {
    const auto loc = locate(mesh, p);
    if (!loc) {
      std::ostringstream msg;
      msg << "sensor (" << p.x1 << ", " << p.x2 << ") lies outside the domain";
      throw ConfigError(msg.str());
    }
    nodes_.push_back(mesh.elements[static_cast<std::size_t>(loc->element)]);
    weights_.push_back(loc->weights);
  }
}

double SensorOperator::interpolate(const Eigen::VectorXd& nodal, std::size_t sensor) const {
  const auto& n = nodes_[sensor];
  const auto& w = weights_[sensor];
  return w[0] * nodal[n[0]] + w[1] * nodal[n[1]] + w[2] * nodal[n[2]];
}

Eigen::VectorXd SensorOperator::observe(const Trajectory& trajectory,
                                        std::span<const double> times) const {
  const auto ns = static_cast<Eigen::Index>(sensors_.size());
  Eigen::VectorXd out(2 * ns * static_cast<Eigen::Index>(times.size()));
  const auto& snap_t = trajectory.times;
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const double t = times[ti];
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    if (snap_t.empty() || t < snap_t.front() - tol || t > snap_t.back() + tol) {
      throw ConfigError("observation time " + std::to_string(t) + " s outside the trajectory");
    }
    std::size_t hi = 0;
    while (hi < snap_t.size() && snap_t[hi] < t - tol) {
      ++hi;
    }
    std::size_t lo = hi;
    double w_hi = 0.0;
    if (std::abs(snap_t[hi] - t) > tol) {
      lo = hi - 1;
      w_hi = (t - snap_t[lo]) / (snap_t[hi] - snap_t[lo]);
    }
    const SimState& a = trajectory.states[lo];
    const SimState& b = trajectory.states[hi];
    for (Eigen::Index s = 0; s < ns; ++s) {
      const auto su = static_cast<std::size_t>(s);
      double th = interpolate(a.theta, su);
      double ph = interpolate(a.phi, su);
      if (lo != hi) {
        th = (1.0 - w_hi) * th + w_hi * interpolate(b.theta, su);
        ph = (1.0 - w_hi) * ph + w_hi * interpolate(b.phi, su);
      }
      const auto ti_idx = static_cast<Eigen::Index>(ti);
      out[observation_index(ti_idx, s, ns, Quantity::theta)] = th;
      out[observation_index(ti_idx, s, ns, Quantity::phi)] = ph;
    }
  }
  return out;
}

Eigen::VectorXd observation_operator(const Mesh& mesh, const Trajectory& trajectory,
                                     std::span<const Point2> sensors,
                                     std::span<const double> times) {
  return SensorOperator(mesh, std::vector<Point2>(sensors.begin(), sensors.end()))
      .observe(trajectory, times);
}

ForwardModel::ForwardModel(const ExperimentConfig& config, KleBasis basis)
    : basis_(std::move(basis)), moments_(prior_moments(config.prior)),
      model_(config.build_mesh(), config.boundary), solver_(config.solver),
      initial_(config.initial), sensors_(model_.mesh(), config.sensor_points()),
      times_(config.observation.times) {
  if (basis_.size() != model_.mesh().num_elements()) {
    throw ConfigError("KLE basis size does not match the number of mesh elements");
  }
}

ParameterFields ForwardModel::fields(std::span<const double> xi) const {
  return realize_parameter_fields(basis_, moments_, xi);
}

Trajectory ForwardModel::trajectory(std::span<const double> xi,
                                    std::span<const double> record_times) const {
  return model_.solve(model_.uniform_state(initial_), solver_, fields(xi), record_times);
}

Eigen::VectorXd ForwardModel::predict(std::span<const double> xi) const {
  return sensors_.observe(trajectory(xi, times_), times_);
}

KleBasis experiment_basis(const ExperimentConfig& config) {
  const Mesh mesh = config.build_mesh();
  const auto grid = mesh.centroids();
  return build_kle_basis(grid, config.correlation, static_cast<Eigen::Index>(grid.size()));
}

Eigen::VectorXd draw_reference_latent(const ExperimentConfig& config, Eigen::Index n_modes) {
  Rng rng(config.seeds.reference);
  return standard_normal(rng, LatentLayout{n_modes}.size());
}

ObservationSet synthesize_observations(const ExperimentConfig& config,
                                       const ForwardModel& reference_model,
                                       std::span<const double> reference_xi) {
  const auto& obs = config.observation;
  if (obs.replicates < 2 || obs.sigma_theta < 0.0 || obs.sigma_phi < 0.0) {
    throw ConfigError("observation synthesis needs >= 2 replicates and non-negative noise");
  }
  ObservationSet set;
  set.sensors = reference_model.sensors().sensors();
  set.times = obs.times;
  set.noiseless = reference_model.predict(reference_xi);

  const Eigen::Index n = set.noiseless.size();
  const Eigen::Index r = obs.replicates;
  Rng rng(config.seeds.noise);
  std::normal_distribution<double> normal(0.0, 1.0);
  set.replicates.resize(r, n);
  for (Eigen::Index k = 0; k < r; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sigma = (i % 2 == 0) ? obs.sigma_theta : obs.sigma_phi;
      set.replicates(k, i) = set.noiseless[i] + sigma * normal(rng);
    }
  }
  set.values = set.replicates.colwise().mean().transpose();
  const Eigen::MatrixXd centered = set.replicates.rowwise() - set.values.transpose();
  set.covariance = centered.transpose() * centered / static_cast<double>(r - 1);
  return set;
}

std::vector<Chain> run_inference(const ExperimentConfig& config, const ForwardModel& model,
                                 const ObservationSet& observations,
                                 const ProgressFn& progress) {
  const GaussianLikelihood likelihood(observations.values, observations.covariance,
                                      config.observation.cobs_regularization);
  const ForwardFn forward = [&model](std::span<const double> xi) { return model.predict(xi); };
  const bool use_likelihood = config.mcmc.use_likelihood;
  const LogDensityFn density = [&](std::span<const double> xi) {
    if (!use_likelihood) {
      return log_prior(xi);
    }
    return log_posterior(xi, likelihood, forward);
  };

  std::vector<Chain> chains(config.mcmc.n_chains);
  parallel_for(chains.size(), config.threads, [&](std::size_t c) {
    MhOptions opt;
    opt.n_samples = config.mcmc.n_samples;
    opt.proposal_scale = config.mcmc.proposal_scale;
    opt.seed = derive_seed(config.seeds.mcmc, c);
    opt.warmup = config.mcmc.warmup;
    opt.progress_interval = config.mcmc.progress_interval;
    if (progress) {
      opt.progress = [&progress, c](std::size_t step, double acc) { progress(c, step, acc); };
    }
    chains[c] = metropolis_hastings(Eigen::VectorXd::Zero(model.latent_size()), density, opt);
  });
  return chains;
}

FieldError field_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference) {
  if (estimate.size() != reference.size() || reference.size() == 0) {
    throw ConfigError("field error needs equally sized, non-empty fields");
  }
  const Eigen::ArrayXd diff = (estimate - reference).array();
  return {std::sqrt(diff.square().mean()), (diff.abs() / reference.array().abs()).mean()};
}

FieldError field_error_summary(std::span<const Eigen::VectorXd> samples,
                               const Eigen::VectorXd& reference) {
  if (samples.empty()) {
    throw ConfigError("field error summary needs at least one sample");
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(reference.size());
  for (const auto& s : samples) {
    mean += s;
  }
  mean /= static_cast<double>(samples.size());
  return field_error(mean, reference);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) {
    throw ConfigError("quantile of an empty sample");
  }
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

BandStatistics band_statistics(const ResponseEnvelopes& env) {
  BandStatistics st;
  std::size_t inside_theta = 0;
  std::size_t inside_phi = 0;
  std::size_t count = 0;
  double pw_t = 0.0, pw_p = 0.0, rw_t = 0.0, rw_p = 0.0;
  for (std::size_t t = 0; t < env.times.size(); ++t) {
    if (env.times[t] <= 0.0) {
      continue;
    }
    const auto r = static_cast<Eigen::Index>(t);
    for (Eigen::Index s = 0; s < env.reference_theta.cols(); ++s) {
      const double rt = env.reference_theta(r, s);
      const double rp = env.reference_phi(r, s);
      inside_theta += (env.posterior_theta.q05(r, s) <= rt && rt <= env.posterior_theta.q95(r, s)) ? 1 : 0;
      inside_phi += (env.posterior_phi.q05(r, s) <= rp && rp <= env.posterior_phi.q95(r, s)) ? 1 : 0;
      pw_t += env.posterior_theta.q95(r, s) - env.posterior_theta.q05(r, s);
      pw_p += env.posterior_phi.q95(r, s) - env.posterior_phi.q05(r, s);
      rw_t += env.prior_theta.q95(r, s) - env.prior_theta.q05(r, s);
      rw_p += env.prior_phi.q95(r, s) - env.prior_phi.q05(r, s);
      ++count;
    }
  }
  if (count == 0) {
    return st;
  }
  const auto c = static_cast<double>(count);
  st.coverage_theta = static_cast<double>(inside_theta) / c;
  st.coverage_phi = static_cast<double>(inside_phi) / c;
  st.coverage = static_cast<double>(inside_theta + inside_phi) / (2.0 * c);
  st.posterior_width_theta = pw_t / c;
  st.posterior_width_phi = pw_p / c;
  st.prior_width_theta = rw_t / c;
  st.prior_width_phi = rw_p / c;
  return st;
}

PosteriorSummary summarize_posterior(const ExperimentConfig& config, const KleBasis& full_basis,
                                     const ForwardModel& model,
                                     std::span<const double> reference_xi,
                                     std::span<const Chain> chains) {
  PosteriorSummary out;
  const KleBasis& basis = model.basis();
  const PriorMoments moments = prior_moments(config.prior);
  const Eigen::Index n_el = basis.size();

  std::vector<const Eigen::VectorXd*> retained;
  for (const Chain& c : chains) {
    for (std::size_t i = config.burn_in(c.size()); i < c.size(); ++i) {
      retained.push_back(&c.samples[i]);
    }
  }
  if (retained.empty()) {
    throw ConfigError("no retained posterior samples to summarize");
  }
  out.retained_samples = retained.size();

  const KleBasis full = full_basis.truncated(full_basis.size());
  out.reference = realize_parameter_fields(full, moments, reference_xi);

  // Posterior mean fields over every retained sample.
  for (auto& v : out.posterior_mean.values) {
    v = Eigen::VectorXd::Zero(n_el);
  }
  for (const Eigen::VectorXd* xi : retained) {
    const ParameterFields f = model.fields(std::span<const double>(xi->data(), xi->size()));
    for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
      out.posterior_mean.values[k] += f.values[k];
    }
  }
  for (auto& v : out.posterior_mean.values) {
    v /= static_cast<double>(retained.size());
  }

  // Element-wise quantiles from an evenly thinned subset.
  constexpr std::size_t kQuantileSamples = 4000;
  const auto q_idx = thinned_indices(retained.size(), kQuantileSamples);
  std::array<Eigen::MatrixXd, kNumMaterialParams> q_values;
  for (auto& m : q_values) {
    m.resize(static_cast<Eigen::Index>(q_idx.size()), n_el);
  }
  for (std::size_t j = 0; j < q_idx.size(); ++j) {
    const Eigen::VectorXd& xi = *retained[q_idx[j]];
    const ParameterFields f = model.fields(std::span<const double>(xi.data(), xi.size()));
    for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
      q_values[k].row(static_cast<Eigen::Index>(j)) = f.values[k].transpose();
    }
  }
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    out.posterior_quantiles[k].resize(n_el, 3);
    std::vector<double> col(q_idx.size());
    for (Eigen::Index e = 0; e < n_el; ++e) {
      for (std::size_t j = 0; j < q_idx.size(); ++j) {
        col[j] = q_values[k](static_cast<Eigen::Index>(j), e);
      }
      out.posterior_quantiles[k](e, 0) = quantile(col, 0.05);
      out.posterior_quantiles[k](e, 1) = quantile(col, 0.50);
      out.posterior_quantiles[k](e, 2) = quantile(col, 0.95);
    }
  }

  // Prior mean of exp(mu_g + sigma_g xi_0 + sigma_g sum sqrt(s_i) xi_i psi_i).
  Eigen::VectorXd mode_variance = Eigen::VectorXd::Zero(n_el);
  for (Eigen::Index i = 0; i < basis.order; ++i) {
    mode_variance += basis.eigenvalues[i] * basis.eigenvectors.col(i).cwiseAbs2();
  }
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    const double sg2 = moments[k].sigma_g * moments[k].sigma_g;
    out.prior_mean.values[k] =
        (moments[k].mu_g + 0.5 * sg2 * (1.0 + mode_variance.array())).exp().matrix();
    out.posterior_error[k] = field_error(out.posterior_mean.values[k], out.reference.values[k]);
    out.prior_error[k] = field_error(out.prior_mean.values[k], out.reference.values[k]);
  }

  // Response replays: thinned posterior samples and fresh prior draws.
  const std::vector<double> times = envelope_times(config);
  const auto post_idx = thinned_indices(retained.size(), config.summary.posterior_responses);
  std::vector<Eigen::VectorXd> prior_xi;
  {
    Rng rng(config.seeds.prior);
    for (std::size_t j = 0; j < config.summary.prior_samples; ++j) {
      prior_xi.push_back(standard_normal(rng, model.latent_size()));
    }
  }
  std::vector<ProbeResponse> post_resp(post_idx.size());
  std::vector<ProbeResponse> prior_resp(prior_xi.size());
  const std::size_t n_post = post_idx.size();
  parallel_for(n_post + prior_xi.size(), config.threads, [&](std::size_t j) {
    if (j < n_post) {
      const Eigen::VectorXd& xi = *retained[post_idx[j]];
      post_resp[j] = probe_response(model, std::span<const double>(xi.data(), xi.size()), times);
    } else {
      const Eigen::VectorXd& xi = prior_xi[j - n_post];
      prior_resp[j - n_post] =
          probe_response(model, std::span<const double>(xi.data(), xi.size()), times);
    }
  });

  const ForwardModel reference_model(config, full);
  const ProbeResponse ref = probe_response(reference_model, reference_xi, times);
  if (!ref.ok) {
    throw NumericalError("reference forward solve failed during summary");
  }

  auto collect = [](const std::vector<ProbeResponse>& resp, std::vector<Eigen::MatrixXd>& th,
                    std::vector<Eigen::MatrixXd>& ph) {
    for (const auto& r : resp) {
      if (r.ok) {
        th.push_back(r.theta);
        ph.push_back(r.phi);
      }
    }
  };
  std::vector<Eigen::MatrixXd> post_th, post_ph, prior_th, prior_ph;
  collect(post_resp, post_th, post_ph);
  collect(prior_resp, prior_th, prior_ph);
  out.posterior_responses = post_th.size();
  out.prior_responses = prior_th.size();
  out.prior_failures = prior_resp.size() - prior_th.size();

  auto& env = out.envelopes;
  env.times = times;
  env.reference_theta = ref.theta;
  env.reference_phi = ref.phi;
  const Eigen::Index rows = ref.theta.rows();
  const Eigen::Index cols = ref.theta.cols();
  env.posterior_theta = band_of(post_th, rows, cols);
  env.posterior_phi = band_of(post_ph, rows, cols);
  env.prior_theta = band_of(prior_th, rows, cols);
  env.prior_phi = band_of(prior_ph, rows, cols);
  out.bands = band_statistics(env);

  out.final_theta_error = Eigen::VectorXd::Zero(ref.final_theta.size());
  out.final_phi_error = Eigen::VectorXd::Zero(ref.final_phi.size());
  if (!post_th.empty()) {
    for (const auto& r : post_resp) {
      if (r.ok) {
        out.final_theta_error += r.final_theta;
        out.final_phi_error += r.final_phi;
      }
    }
    out.final_theta_error /= static_cast<double>(post_th.size());
    out.final_phi_error /= static_cast<double>(post_th.size());
  }
  out.final_theta_error -= ref.final_theta;
  out.final_phi_error -= ref.final_phi;

  // lambda_0 along the horizontal cut line.
  const Mesh& mesh = model.model().mesh();
  const int np = config.summary.cut_points;
  std::vector<int> cut_elements;
  for (int i = 0; i < np; ++i) {
    const double x = config.geometry.width * i / (np - 1);
    const auto loc = locate(mesh, {x, config.summary.cut_x2});
    out.lambda_cut.x1.push_back(x);
    cut_elements.push_back(loc->element);
  }
  auto cut_of = [&](const Eigen::VectorXd& field) {
    Eigen::VectorXd v(np);
    for (int i = 0; i < np; ++i) {
      v[i] = field[cut_elements[static_cast<std::size_t>(i)]];
    }
    return v;
  };
  const auto lam = static_cast<std::size_t>(Param::lambda_0);
  out.lambda_cut.reference = cut_of(out.reference.values[lam]);
  for (std::size_t j : post_idx) {
    const Eigen::VectorXd& xi = *retained[j];
    out.lambda_cut.posterior.push_back(
        cut_of(model.fields(std::span<const double>(xi.data(), xi.size())).values[lam]));
  }
  for (const auto& xi : prior_xi) {
    out.lambda_cut.prior.push_back(
        cut_of(model.fields(std::span<const double>(xi.data(), xi.size())).values[lam]));
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  ExperimentResult result;
  const KleBasis full = experiment_basis(config);
  result.reference_xi = draw_reference_latent(config, full.size());
  const ForwardModel reference_model(config, full);
  result.observations = synthesize_observations(config, reference_model, as_span(result.reference_xi));
  const ForwardModel model(config, full.truncated(config.kle_order));
  result.chains = run_inference(config, model, result.observations, progress);
  result.summary = summarize_posterior(config, full, model, as_span(result.reference_xi), result.chains);
  return result;
}

TruncationCurve truncation_error_curve(const ExperimentConfig& config, const KleBasis& full_basis,
                                       std::span<const int> orders, int realizations,
                                       bool with_responses, std::uint64_t seed) {
  if (realizations < 1) {
    throw ConfigError("truncation error needs at least one realization");
  }
  const KleBasis full = full_basis.truncated(full_basis.size());
  const PriorMoments moments = prior_moments(config.prior);
  const auto lam = static_cast<std::size_t>(Param::lambda_0);

  std::vector<Eigen::VectorXd> draws;
  Rng rng(seed);
  for (int j = 0; j < realizations; ++j) {
    draws.push_back(standard_normal(rng, LatentLayout{full.size()}.size()));
  }

  TruncationCurve curve;
  curve.orders.assign(orders.begin(), orders.end());
  std::vector<Eigen::VectorXd> ref_fields;
  for (const auto& xi : draws) {
    ref_fields.push_back(realize_parameter_fields(full, moments, as_span(xi)).values[lam]);
  }
  std::vector<KleBasis> truncated;
  for (int m : orders) {
    truncated.push_back(full.truncated(m));
    std::vector<Eigen::VectorXd> approx;
    for (const auto& xi : draws) {
      const auto head = std::span<const double>(xi.data(), static_cast<std::size_t>(8 + m));
      approx.push_back(realize_parameter_fields(truncated.back(), moments, head).values[lam]);
    }
    curve.input_error.push_back(truncation_error(ref_fields, approx));
  }
  if (!with_responses) {
    return curve;
  }

  const HeatMoistureModel model(config.build_mesh(), config.boundary);
  const double t_end = config.solver.t_end;
  auto response = [&](const KleBasis& b, std::span<const double> xi) {
    const auto traj = model.solve(model.uniform_state(config.initial), config.solver,
                                  realize_parameter_fields(b, moments, xi),
                                  std::span<const double>(&t_end, 1));
    return stacked_response(traj.states.back());
  };
  const std::size_t n_orders = orders.size();
  const auto n_real = static_cast<std::size_t>(realizations);
  // Slot 0 holds the full-order response, slot m + 1 the one for orders[m].
  std::vector<std::vector<std::optional<Eigen::VectorXd>>> resp(
      n_real, std::vector<std::optional<Eigen::VectorXd>>(n_orders + 1));
  parallel_for(n_real * (n_orders + 1), config.threads, [&](std::size_t task) {
    const std::size_t j = task % n_real;
    const std::size_t m = task / n_real;
    const Eigen::VectorXd& xi = draws[j];
    try {
      if (m == 0) {
        resp[j][0] = response(full, as_span(xi));
      } else {
        const auto head = std::span<const double>(xi.data(), static_cast<std::size_t>(8 + orders[m - 1]));
        resp[j][m] = response(truncated[m - 1], head);
      }
    } catch (const NumericalError&) {
      resp[j][m].reset();
    }
  });
  // A realization enters the response curve only if every order solved.
  std::vector<Eigen::VectorXd> ref_resp;
  std::vector<std::vector<Eigen::VectorXd>> approx_resp(n_orders);
  for (const auto& r : resp) {
    if (!std::all_of(r.begin(), r.end(), [](const auto& v) { return v.has_value(); })) {
      ++curve.response_failures;
      continue;
    }
    ref_resp.push_back(*r[0]);
    for (std::size_t m = 0; m < n_orders; ++m) {
      approx_resp[m].push_back(*r[m + 1]);
    }
  }
  if (ref_resp.empty()) {
    throw NumericalError("every realization of the truncation study failed to solve");
  }
  for (std::size_t m = 0; m < n_orders; ++m) {
    curve.response_error.push_back(truncation_error(ref_resp, approx_resp[m]));
  }
  return curve;
}

} // namespace hmb
