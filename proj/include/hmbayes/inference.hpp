#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "hmbayes/random.hpp"

namespace hmb {

// Standard-normal log density up to its normalizing constant: -|xi|^2 / 2.
double log_prior(std::span<const double> xi);

/// Gaussian misfit -(y - z)^T C^-1 (y - z) / 2 with C factorized once.
class GaussianLikelihood {
public:
  // Adds regularization * trace(C) / n to the diagonal before the Cholesky
  // factorization. Throws DataError when C is not square, not finite or not
  // positive definite after regularization.
  GaussianLikelihood(Eigen::VectorXd z, const Eigen::MatrixXd& cov,
                     double regularization = 1e-10);

  double operator()(const Eigen::VectorXd& prediction) const;

  Eigen::Index size() const { return z_.size(); }
  const Eigen::VectorXd& data() const { return z_; }

private:
  Eigen::VectorXd z_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
};

using ForwardFn = std::function<Eigen::VectorXd(std::span<const double>)>;
using LogDensityFn = std::function<double(std::span<const double>)>;

// -inf when the forward model throws a NumericalError; `failures`, when
// given, is incremented in that case.
double log_likelihood(std::span<const double> xi, const GaussianLikelihood& likelihood,
                      const ForwardFn& forward, std::size_t* failures = nullptr);

double log_posterior(std::span<const double> xi, const GaussianLikelihood& likelihood,
                     const ForwardFn& forward, std::size_t* failures = nullptr);

/// Metropolis acceptance for a symmetric proposal. A proposal with a
/// non-finite log density is never accepted; any finite proposal is accepted
/// from a state whose log density is -inf.
inline bool metropolis_accept(double current_logp, double proposed_logp, double u) {
  if (!std::isfinite(proposed_logp)) {
    return false;
  }
  if (!std::isfinite(current_logp)) {
    return true;
  }
  return std::log(u) < proposed_logp - current_logp;
}

/// Result of a generic Metropolis run over an arbitrary state type.
template <class State>
struct MetropolisRun {
  std::vector<State> states;
  std::vector<double> logp;
  std::vector<char> accepted;
};

/// Runs `n` Metropolis transitions from `init`, recording the state after
/// each one. `propose(state, rng)` must be a symmetric proposal. One uniform
/// variate is drawn per step after the proposal, whatever the outcome.
template <class State, class Propose, class LogTarget>
MetropolisRun<State> run_metropolis(State init, std::size_t n, Propose&& propose,
                                    LogTarget&& log_target, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  MetropolisRun<State> run;
  run.states.reserve(n);
  run.logp.reserve(n);
  run.accepted.reserve(n);
  State current = std::move(init);
  double current_logp = log_target(current);
  for (std::size_t i = 0; i < n; ++i) {
    State candidate = propose(current, rng);
    const double candidate_logp = log_target(candidate);
    const double u = uniform(rng);
    const bool ok = metropolis_accept(current_logp, candidate_logp, u);
    if (ok) {
      current = std::move(candidate);
      current_logp = candidate_logp;
    }
    run.states.push_back(current);
    run.logp.push_back(current_logp);
    run.accepted.push_back(ok ? 1 : 0);
  }
  return run;
}

struct MhOptions {
  std::size_t n_samples = 1000;
  double proposal_scale = 0.1;
  std::uint64_t seed = 1;
  // Discarded warm-up steps used to tune the proposal scale towards an
  // acceptance rate within [target_low, target_high].
  std::size_t warmup = 0;
  std::size_t tune_interval = 50;
  double target_low = 0.2;
  double target_high = 0.5;
  // Called every `progress_interval` main-chain steps (0 disables).
  std::size_t progress_interval = 0;
  std::function<void(std::size_t step, double acceptance)> progress;
};

/// Random-walk Metropolis chain over the latent vector.
struct Chain {
  std::vector<Eigen::VectorXd> samples;
  std::vector<double> logpost;
  std::vector<char> accepted;
  double proposal_scale = 0.0;  ///< scale used by the recorded steps
  std::uint64_t seed = 0;
  std::size_t failures = 0;     ///< log density evaluations that returned -inf

  std::size_t size() const { return samples.size(); }
  Eigen::Index dim() const { return samples.empty() ? 0 : samples.front().size(); }
  double acceptance_rate(std::size_t from = 0) const;
};

// Gaussian random-walk proposals xi' = xi + scale * eta. Throws ConfigError
// for n_samples == 0 or a non-positive scale.
Chain metropolis_hastings(const Eigen::VectorXd& init, const LogDensityFn& log_density,
                          const MhOptions& options);

struct ChainDiagnostics {
  std::size_t burn_in = 0;
  std::size_t retained = 0;
  double acceptance_rate = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  Eigen::VectorXd autocorrelation_time;
  Eigen::VectorXd effective_sample_size;
};

// Integrated autocorrelation time with Sokal's self-consistent window (c = 5).
// A constant series has no information beyond one draw: tau = n.
double autocorrelation_time(std::span<const double> series);

// Throws ConfigError unless burn_in < chain length.
ChainDiagnostics chain_diagnostics(const Chain& chain, std::size_t burn_in);

// Potential scale reduction per coordinate over chains of equal length.
Eigen::VectorXd gelman_rubin(std::span<const Chain> chains, std::size_t burn_in);

} // namespace hmb
