#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hmbayes/fem.hpp"
#include "hmbayes/inference.hpp"
#include "hmbayes/mesh.hpp"
#include "hmbayes/randfield.hpp"

namespace hmb {

inline constexpr double kSecondsPerHour = 3600.0;

struct PriorEntry {
  double mean = 1.0;
  double stddev = 0.0;
};

using PriorTable = std::array<PriorEntry, kNumMaterialParams>;

// Means and standard deviations of the masonry prior, ordered as Param.
PriorTable masonry_prior_table();

PriorMoments prior_moments(const PriorTable& table);

struct GeometryConfig {
  double width = 0.5;   ///< [m], x1 direction between the loaded edges
  double height = 0.06; ///< [m]
  int nx = 16;          ///< 16 x 5 nodes: 80 nodes, 120 triangles
  int ny = 5;
};

struct ObservationConfig {
  std::vector<Point2> sensors;  ///< empty: two columns of seven probes
  std::vector<double> times{10.0 * kSecondsPerHour, 50.0 * kSecondsPerHour,
                            200.0 * kSecondsPerHour};
  double sigma_theta = 0.2;     ///< [degC]
  double sigma_phi = 0.02;      ///< [-]
  int replicates = 100;
  double cobs_regularization = 1e-10;
};

struct McmcConfig {
  std::size_t n_samples = 80000;
  std::size_t warmup = 2000;
  double proposal_scale = 0.2;
  double burn_in_fraction = 0.2;
  std::size_t n_chains = 1;
  std::size_t progress_interval = 0;
  bool use_likelihood = true;   ///< false samples the prior (no forward solves)
};

struct SummaryConfig {
  std::size_t posterior_responses = 200;
  std::size_t prior_samples = 200;
  double envelope_interval = 10.0 * kSecondsPerHour;
  double cut_x2 = 0.03;         ///< [m] height of the lambda_0 cut line
  int cut_points = 101;
};

struct SeedConfig {
  std::uint64_t reference = 20110001;
  std::uint64_t noise = 20110002;
  std::uint64_t mcmc = 20110003;
  std::uint64_t prior = 20110004;
};

struct ExperimentConfig {
  GeometryConfig geometry;
  PriorTable prior = masonry_prior_table();
  CovarianceSpec correlation;
  int kle_order = 7;
  LocalState initial{14.0, 0.5};
  BoundaryConditions boundary;
  SolverConfig solver;
  ObservationConfig observation;
  McmcConfig mcmc;
  SummaryConfig summary;
  SeedConfig seeds;
  std::size_t threads = 1;

  // Throws ConfigError on any violated constraint, including a KLE order
  // larger than the number of elements.
  void validate() const;

  Mesh build_mesh() const;
  std::vector<Point2> sensor_points() const;
  std::size_t burn_in(std::size_t chain_length) const;
};

// Two columns of seven equispaced interior probes at x1 = width/3 and 2 width/3.
std::vector<Point2> default_sensor_layout(const GeometryConfig& geometry);

enum class Quantity : int { theta = 0, phi = 1 };

/// Observation vector layout: time-major, then sensor, then (theta, phi).
inline Eigen::Index observation_index(Eigen::Index time, Eigen::Index sensor,
                                      Eigen::Index n_sensors, Quantity q) {
  return (time * n_sensors + sensor) * 2 + static_cast<Eigen::Index>(q);
}

struct ObservationSet {
  std::vector<Point2> sensors;
  std::vector<double> times;     ///< [s]
  Eigen::VectorXd values;        ///< z, the replicate mean
  Eigen::VectorXd noiseless;     ///< reference response before perturbation
  Eigen::MatrixXd replicates;    ///< one noisy replicate per row
  Eigen::MatrixXd covariance;    ///< empirical covariance of the replicates

  Eigen::Index size() const { return values.size(); }
};

/// Barycentric interpolation of nodal fields at fixed sensor points, with
/// linear interpolation in time between trajectory snapshots.
class SensorOperator {
public:
  // Throws ConfigError when a sensor lies outside the mesh.
  SensorOperator(const Mesh& mesh, std::vector<Point2> sensors);

  std::size_t size() const { return sensors_.size(); }
  const std::vector<Point2>& sensors() const { return sensors_; }

  double interpolate(const Eigen::VectorXd& nodal, std::size_t sensor) const;

  // 2 * |sensors| * |times| values in observation_index order. Throws
  // ConfigError when a time falls outside the trajectory.
  Eigen::VectorXd observe(const Trajectory& trajectory, std::span<const double> times) const;

private:
  std::vector<Point2> sensors_;
  std::vector<std::array<int, 3>> nodes_;
  std::vector<std::array<double, 3>> weights_;
};

Eigen::VectorXd observation_operator(const Mesh& mesh, const Trajectory& trajectory,
                                     std::span<const Point2> sensors,
                                     std::span<const double> times);

/// Latent vector -> parameter fields -> trajectory -> predicted observations.
/// Immutable after construction and safe to share between threads.
class ForwardModel {
public:
  ForwardModel(const ExperimentConfig& config, KleBasis basis);

  const KleBasis& basis() const { return basis_; }
  const HeatMoistureModel& model() const { return model_; }
  const SensorOperator& sensors() const { return sensors_; }
  Eigen::Index latent_size() const { return LatentLayout{basis_.order}.size(); }

  ParameterFields fields(std::span<const double> xi) const;
  Trajectory trajectory(std::span<const double> xi, std::span<const double> record_times) const;
  Eigen::VectorXd predict(std::span<const double> xi) const;

private:
  KleBasis basis_;
  PriorMoments moments_;
  HeatMoistureModel model_;
  SolverConfig solver_;
  LocalState initial_;
  SensorOperator sensors_;
  std::vector<double> times_;
};

// Full-rank basis on the element centroids of the configured mesh.
KleBasis experiment_basis(const ExperimentConfig& config);

Eigen::VectorXd draw_reference_latent(const ExperimentConfig& config, Eigen::Index n_modes);

// Runs the reference model, perturbs it with independent Gaussian noise per
// replicate and returns the replicate mean with the empirical covariance.
ObservationSet synthesize_observations(const ExperimentConfig& config,
                                       const ForwardModel& reference_model,
                                       std::span<const double> reference_xi);

using ProgressFn = std::function<void(std::size_t chain, std::size_t step, double acceptance)>;

// One chain per config.mcmc.n_chains, started at the prior mode with seeds
// derived from config.seeds.mcmc. Chains run concurrently up to config.threads.
std::vector<Chain> run_inference(const ExperimentConfig& config, const ForwardModel& model,
                                 const ObservationSet& observations,
                                 const ProgressFn& progress = {});

struct FieldError {
  double rmse = 0.0;
  double mean_abs_rel = 0.0;
};

FieldError field_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference);

// Error of the sample mean against the reference.
FieldError field_error_summary(std::span<const Eigen::VectorXd> samples,
                               const Eigen::VectorXd& reference);

/// Point-wise 5/50/95 % quantiles; rows are checkpoints, columns probes.
struct Band {
  Eigen::MatrixXd q05;
  Eigen::MatrixXd q50;
  Eigen::MatrixXd q95;
};

struct ResponseEnvelopes {
  std::vector<double> times;           ///< [s]
  Eigen::MatrixXd reference_theta;
  Eigen::MatrixXd reference_phi;
  Band posterior_theta;
  Band posterior_phi;
  Band prior_theta;
  Band prior_phi;
};

struct BandStatistics {
  double coverage = 0.0;               ///< fraction of checkpoints inside [q05, q95]
  double coverage_theta = 0.0;
  double coverage_phi = 0.0;
  double posterior_width_theta = 0.0;  ///< mean q95 - q05
  double posterior_width_phi = 0.0;
  double prior_width_theta = 0.0;
  double prior_width_phi = 0.0;
};

// Checkpoints at t = 0 are skipped: every band collapses onto the initial state there.
BandStatistics band_statistics(const ResponseEnvelopes& env);

struct FieldCut {
  std::vector<double> x1;
  Eigen::VectorXd reference;
  std::vector<Eigen::VectorXd> posterior;
  std::vector<Eigen::VectorXd> prior;
};

struct PosteriorSummary {
  std::size_t retained_samples = 0;
  std::size_t posterior_responses = 0;
  std::size_t prior_responses = 0;
  std::size_t prior_failures = 0;
  ParameterFields reference;
  ParameterFields posterior_mean;
  ParameterFields prior_mean;
  std::array<Eigen::MatrixXd, kNumMaterialParams> posterior_quantiles;  ///< n_elements x 3
  std::array<FieldError, kNumMaterialParams> posterior_error;
  std::array<FieldError, kNumMaterialParams> prior_error;
  ResponseEnvelopes envelopes;
  BandStatistics bands;
  Eigen::VectorXd final_theta_error;   ///< posterior mean - reference at t_end, nodal
  Eigen::VectorXd final_phi_error;
  FieldCut lambda_cut;
};

// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double p);

PosteriorSummary summarize_posterior(const ExperimentConfig& config, const KleBasis& full_basis,
                                     const ForwardModel& model,
                                     std::span<const double> reference_xi,
                                     std::span<const Chain> chains);

struct ExperimentResult {
  Eigen::VectorXd reference_xi;
  ObservationSet observations;
  std::vector<Chain> chains;
  PosteriorSummary summary;
};

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const ProgressFn& progress = {});

/// Input-field (lambda_0) and response truncation errors for several KLE
/// orders, from `realizations` prior draws shared between all orders.
struct TruncationCurve {
  std::vector<int> orders;
  std::vector<double> input_error;
  std::vector<double> response_error;  ///< empty unless responses were requested
  std::size_t response_failures = 0;   ///< realizations skipped after a failed solve
};

TruncationCurve truncation_error_curve(const ExperimentConfig& config, const KleBasis& full_basis,
                                       std::span<const int> orders, int realizations,
                                       bool with_responses, std::uint64_t seed);

} // namespace hmb
