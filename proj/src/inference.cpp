#include "hmbayes/inference.hpp"

#include <algorithm>
#include <string>

#include "hmbayes/error.hpp"

namespace hmb {

double log_prior(std::span<const double> xi) {
  double sq = 0.0;
  for (double v : xi) {
    sq += v * v;
  }
  return -0.5 * sq;
}

GaussianLikelihood::GaussianLikelihood(Eigen::VectorXd z, const Eigen::MatrixXd& cov,
                                       double regularization)
    : z_(std::move(z)) {
  const Eigen::Index n = z_.size();
  if (n == 0 || cov.rows() != n || cov.cols() != n) {
    throw DataError("observation covariance must be " + std::to_string(n) + "x" +
                    std::to_string(n));
  }
  if (!cov.allFinite() || !z_.allFinite()) {
    throw DataError("observation data contain non-finite values");
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(cov.cwiseAbs().maxCoeff(), 1e-300)) {
    throw DataError("observation covariance is not symmetric");
  }
  Eigen::MatrixXd reg = cov;
  reg.diagonal().array() += regularization * cov.trace() / static_cast<double>(n);
  chol_.compute(reg);
  if (chol_.info() != Eigen::Success) {
    throw DataError("observation covariance is not positive definite");
  }
}

double GaussianLikelihood::operator()(const Eigen::VectorXd& prediction) const {
  if (prediction.size() != z_.size()) {
    throw ConfigError("prediction has " + std::to_string(prediction.size()) +
                      " entries, data has " + std::to_string(z_.size()));
  }
  const Eigen::VectorXd w = chol_.matrixL().solve(prediction - z_);
  return -0.5 * w.squaredNorm();
}

double log_likelihood(std::span<const double> xi, const GaussianLikelihood& likelihood,
                      const ForwardFn& forward, std::size_t* failures) {
  try {
    const Eigen::VectorXd y = forward(xi);
    const double value = likelihood(y);
    if (std::isfinite(value)) {
      return value;
    }
  } catch (const NumericalError&) {
  }
  if (failures != nullptr) {
    ++*failures;
  }
  return -std::numeric_limits<double>::infinity();
}

double log_posterior(std::span<const double> xi, const GaussianLikelihood& likelihood,
                     const ForwardFn& forward, std::size_t* failures) {
  return log_prior(xi) + log_likelihood(xi, likelihood, forward, failures);
}

double Chain::acceptance_rate(std::size_t from) const {
  if (from >= accepted.size()) {
    return 0.0;
  }
  std::size_t count = 0;
  for (std::size_t i = from; i < accepted.size(); ++i) {
    count += accepted[i] != 0 ? 1 : 0;
  }
  return static_cast<double>(count) / static_cast<double>(accepted.size() - from);
}

Chain metropolis_hastings(const Eigen::VectorXd& init, const LogDensityFn& log_density,
                          const MhOptions& options) {
  if (options.n_samples == 0) {
    throw ConfigError("MH chain needs at least one sample");
  }
  if (!(options.proposal_scale > 0.0)) {
    throw ConfigError("MH proposal scale must be positive");
  }
  Rng rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Chain chain;
  chain.seed = options.seed;
  double scale = options.proposal_scale;

  auto evaluate = [&](const Eigen::VectorXd& xi) {
    const double v = log_density(std::span<const double>(xi.data(), xi.size()));
    if (!std::isfinite(v)) {
      ++chain.failures;
    }
    return v;
  };

  Eigen::VectorXd current = init;
  double current_logp = evaluate(current);
  Eigen::VectorXd candidate(init.size());

  auto transition = [&]() {
    for (Eigen::Index k = 0; k < candidate.size(); ++k) {
      candidate[k] = current[k] + scale * normal(rng);
    }
    const double candidate_logp = evaluate(candidate);
    const double u = uniform(rng);
    if (metropolis_accept(current_logp, candidate_logp, u)) {
      current.swap(candidate);
      current_logp = candidate_logp;
      return true;
    }
    return false;
  };

  const std::size_t window = std::max<std::size_t>(options.tune_interval, 1);
  std::size_t window_accepts = 0;
  for (std::size_t i = 0; i < options.warmup; ++i) {
    window_accepts += transition() ? 1 : 0;
    if ((i + 1) % window == 0) {
      const double rate = static_cast<double>(window_accepts) / static_cast<double>(window);
      if (rate < options.target_low) {
        scale *= 0.7;
      } else if (rate > options.target_high) {
        scale *= 1.4;
      }
      window_accepts = 0;
    }
  }

  chain.proposal_scale = scale;
  chain.samples.reserve(options.n_samples);
  chain.logpost.reserve(options.n_samples);
  chain.accepted.reserve(options.n_samples);
  std::size_t accepts = 0;
  for (std::size_t i = 0; i < options.n_samples; ++i) {
    const bool ok = transition();
    accepts += ok ? 1 : 0;
    chain.samples.push_back(current);
    chain.logpost.push_back(current_logp);
    chain.accepted.push_back(ok ? 1 : 0);
    if (options.progress && options.progress_interval > 0 &&
        (i + 1) % options.progress_interval == 0) {
      options.progress(i + 1, static_cast<double>(accepts) / static_cast<double>(i + 1));
    }
  }
  return chain;
}

double autocorrelation_time(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 2) {
    return 1.0;
  }
  double mean = 0.0;
  for (double v : series) {
    mean += v;
  }
  mean /= static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      s += (series[i] - mean) * (series[i + lag] - mean);
    }
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) {
    return static_cast<double>(n);
  }
  double tau = 1.0;
  constexpr double kWindowFactor = 5.0;
  for (std::size_t lag = 1; lag < n / 2; ++lag) {
    tau += 2.0 * autocov(lag) / c0;
    if (static_cast<double>(lag) >= kWindowFactor * tau) {
      break;
    }
  }
  return std::max(tau, 1.0 / static_cast<double>(n));
}

ChainDiagnostics chain_diagnostics(const Chain& chain, std::size_t burn_in) {
  if (burn_in >= chain.size()) {
    throw ConfigError("burn-in " + std::to_string(burn_in) + " must be below chain length " +
                      std::to_string(chain.size()));
  }
  ChainDiagnostics d;
  d.burn_in = burn_in;
  d.retained = chain.size() - burn_in;
  d.acceptance_rate = chain.acceptance_rate(burn_in);
  const Eigen::Index dim = chain.dim();
  d.mean = Eigen::VectorXd::Zero(dim);
  d.stddev = Eigen::VectorXd::Zero(dim);
  d.autocorrelation_time = Eigen::VectorXd::Zero(dim);
  d.effective_sample_size = Eigen::VectorXd::Zero(dim);

  std::vector<double> series(d.retained);
  for (Eigen::Index k = 0; k < dim; ++k) {
    for (std::size_t i = 0; i < d.retained; ++i) {
      series[i] = chain.samples[burn_in + i][k];
    }
    double mean = 0.0;
    for (double v : series) {
      mean += v;
    }
    mean /= static_cast<double>(d.retained);
    double var = 0.0;
    for (double v : series) {
      var += (v - mean) * (v - mean);
    }
    var = d.retained > 1 ? var / static_cast<double>(d.retained - 1) : 0.0;
    d.mean[k] = mean;
    d.stddev[k] = std::sqrt(var);
    d.autocorrelation_time[k] = autocorrelation_time(series);
    d.effective_sample_size[k] = static_cast<double>(d.retained) / d.autocorrelation_time[k];
  }
  return d;
}

Eigen::VectorXd gelman_rubin(std::span<const Chain> chains, std::size_t burn_in) {
  if (chains.size() < 2) {
    throw ConfigError("R-hat needs at least two chains");
  }
  const std::size_t len = chains.front().size();
  for (const Chain& c : chains) {
    if (c.size() != len || c.dim() != chains.front().dim()) {
      throw ConfigError("R-hat needs chains of equal length and dimension");
    }
  }
  if (burn_in + 2 > len) {
    throw ConfigError("R-hat needs at least two retained samples per chain");
  }
  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(len - burn_in);
  const Eigen::Index dim = chains.front().dim();
  Eigen::VectorXd rhat(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    std::vector<double> means;
    double within = 0.0;
    for (const Chain& c : chains) {
      double mean = 0.0;
      for (std::size_t i = burn_in; i < len; ++i) {
        mean += c.samples[i][k];
      }
      mean /= n;
      double var = 0.0;
      for (std::size_t i = burn_in; i < len; ++i) {
        var += (c.samples[i][k] - mean) * (c.samples[i][k] - mean);
      }
      within += var / (n - 1.0);
      means.push_back(mean);
    }
    within /= m;
    double grand = 0.0;
    for (double v : means) {
      grand += v;
    }
    grand /= m;
    double between = 0.0;
    for (double v : means) {
      between += (v - grand) * (v - grand);
    }
    between *= n / (m - 1.0);
    const double pooled = (n - 1.0) / n * within + between / n;
    rhat[k] = within > 0.0 ? std::sqrt(pooled / within) : 1.0;
  }
  return rhat;
}

} // namespace hmb
