#include <doctest.h>

#include <array>
#include <cmath>

#include <Eigen/LU>

#include "hmbayes/error.hpp"
#include "hmbayes/inference.hpp"

using namespace hmb;

namespace {

double sample_mean(const Chain& c, std::size_t from, Eigen::Index k = 0) {
  double s = 0.0;
  for (std::size_t i = from; i < c.size(); ++i) {
    s += c.samples[i][k];
  }
  return s / static_cast<double>(c.size() - from);
}

double sample_var(const Chain& c, std::size_t from, Eigen::Index k = 0) {
  const double m = sample_mean(c, from, k);
  double s = 0.0;
  for (std::size_t i = from; i < c.size(); ++i) {
    s += (c.samples[i][k] - m) * (c.samples[i][k] - m);
  }
  return s / static_cast<double>(c.size() - from - 1);
}

Chain constant_chain(std::vector<double> values) {
  Chain c;
  for (double v : values) {
    c.samples.push_back(Eigen::VectorXd::Constant(1, v));
    c.logpost.push_back(0.0);
    c.accepted.push_back(1);
  }
  return c;
}

} // namespace

TEST_CASE("standard normal target") {
  MhOptions opt;
  opt.n_samples = 200000;
  opt.proposal_scale = 2.4;
  opt.seed = 17;
  const Chain c = metropolis_hastings(Eigen::VectorXd::Zero(1),
                                      [](std::span<const double> x) { return log_prior(x); }, opt);
  CHECK(c.size() == opt.n_samples);
  CHECK(std::abs(sample_mean(c, 1000)) < 0.03);
  const double var = sample_var(c, 1000);
  CHECK(var > 0.95);
  CHECK(var < 1.05);
}

TEST_CASE("conjugate linear Gaussian posterior") {
  // y = 2 xi, sigma = 0.5, z = 1, prior N(0, 1): precision 1 + 16 = 17.
  const GaussianLikelihood lik(Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 0.25), 0.0);
  const ForwardFn forward = [](std::span<const double> xi) {
    return Eigen::VectorXd::Constant(1, 2.0 * xi[0]);
  };
  MhOptions opt;
  opt.n_samples = 200000;
  opt.proposal_scale = 0.6;
  opt.seed = 5;
  const Chain c = metropolis_hastings(
      Eigen::VectorXd::Zero(1), [&](std::span<const double> x) { return log_posterior(x, lik, forward); }, opt);
  CHECK(sample_mean(c, 1000) == doctest::Approx(8.0 / 17.0).epsilon(0.02));
  CHECK(sample_var(c, 1000) == doctest::Approx(1.0 / 17.0).epsilon(0.05));
}

TEST_CASE("acceptance probability follows the density ratio") {
  Rng rng(9);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const int n = 200000;
  int accepted = 0;
  for (int i = 0; i < n; ++i) {
    accepted += metropolis_accept(0.0, std::log(0.5), uniform(rng)) ? 1 : 0;
  }
  CHECK(static_cast<double>(accepted) / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(metropolis_accept(0.0, 1.0, 0.999999));
  CHECK_FALSE(metropolis_accept(0.0, std::numeric_limits<double>::quiet_NaN(), 1e-9));
  CHECK_FALSE(metropolis_accept(0.0, -std::numeric_limits<double>::infinity(), 1e-9));
  CHECK(metropolis_accept(-std::numeric_limits<double>::infinity(), -1e6, 0.9));
}

TEST_CASE("two-state chain satisfies detailed balance") {
  // pi = (1/4, 3/4); proposals always flip the state.
  const std::array<double, 2> pi{0.25, 0.75};
  Rng rng(21);
  const auto run = run_metropolis(
      0, 400000, [](int s, Rng&) { return 1 - s; },
      [&](int s) { return std::log(pi[static_cast<std::size_t>(s)]); }, rng);
  double ones = 0.0;
  std::array<double, 2> flows{0.0, 0.0};
  for (std::size_t i = 0; i < run.states.size(); ++i) {
    ones += run.states[i];
    if (i > 0 && run.states[i] != run.states[i - 1]) {
      flows[static_cast<std::size_t>(run.states[i - 1])] += 1.0;
    }
  }
  CHECK(ones / static_cast<double>(run.states.size()) == doctest::Approx(0.75).epsilon(0.01));
  CHECK(std::abs(flows[0] - flows[1]) <= 1.0);
}

TEST_CASE("a constant shift of the log density leaves the chain unchanged") {
  MhOptions opt;
  opt.n_samples = 2000;
  opt.proposal_scale = 0.8;
  opt.warmup = 200;
  opt.seed = 33;
  const auto base = [](std::span<const double> x) { return log_prior(x); };
  const Chain a = metropolis_hastings(Eigen::VectorXd::Zero(3), base, opt);
  const Chain b = metropolis_hastings(
      Eigen::VectorXd::Zero(3), [&](std::span<const double> x) { return base(x) + 12.5; }, opt);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i] == b.samples[i]);
  }
  CHECK(a.proposal_scale == b.proposal_scale);
}

TEST_CASE("seeds make chains reproducible") {
  MhOptions opt;
  opt.n_samples = 500;
  opt.seed = 4;
  const auto target = [](std::span<const double> x) { return log_prior(x); };
  const Chain a = metropolis_hastings(Eigen::VectorXd::Zero(2), target, opt);
  const Chain b = metropolis_hastings(Eigen::VectorXd::Zero(2), target, opt);
  opt.seed = 5;
  const Chain c = metropolis_hastings(Eigen::VectorXd::Zero(2), target, opt);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
}

TEST_CASE("failed forward solves are rejected and counted") {
  const GaussianLikelihood lik(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), 0.0);
  std::size_t failures = 0;
  const ForwardFn forward = [](std::span<const double> xi) -> Eigen::VectorXd {
    if (xi[0] > 0.0) {
      throw SingularityError("test");
    }
    return Eigen::VectorXd::Constant(1, xi[0]);
  };
  const double xi_bad = 0.5;
  CHECK(log_likelihood(std::span(&xi_bad, 1), lik, forward, &failures) ==
        -std::numeric_limits<double>::infinity());
  CHECK(failures == 1);
  MhOptions opt;
  opt.n_samples = 5000;
  opt.proposal_scale = 1.0;
  const Chain c = metropolis_hastings(
      Eigen::VectorXd::Constant(1, -0.5),
      [&](std::span<const double> x) { return log_posterior(x, lik, forward); }, opt);
  for (const auto& s : c.samples) {
    CHECK(s[0] <= 0.0);
  }
  CHECK(c.failures > 0);
}

TEST_CASE("invalid sampler options") {
  const auto target = [](std::span<const double> x) { return log_prior(x); };
  MhOptions opt;
  opt.n_samples = 0;
  CHECK_THROWS_AS(metropolis_hastings(Eigen::VectorXd::Zero(1), target, opt), ConfigError);
  opt.n_samples = 10;
  opt.proposal_scale = 0.0;
  CHECK_THROWS_AS(metropolis_hastings(Eigen::VectorXd::Zero(1), target, opt), ConfigError);
}

TEST_CASE("likelihood rejects bad covariance") {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(GaussianLikelihood(z, Eigen::MatrixXd::Identity(3, 3)), DataError);
  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(GaussianLikelihood(z, indefinite, 0.0), DataError);
  Eigen::MatrixXd nan = Eigen::MatrixXd::Identity(2, 2);
  nan(0, 0) = std::nan("");
  CHECK_THROWS_AS(GaussianLikelihood(z, nan), DataError);
  Eigen::MatrixXd c(2, 2);
  c << 2.0, 0.5, 0.5, 1.0;
  const GaussianLikelihood lik(z, c, 0.0);
  Eigen::VectorXd y(2);
  y << 1.0, -1.0;
  CHECK(lik(y) == doctest::Approx(-0.5 * y.dot(c.inverse() * y)).epsilon(1e-14));
  CHECK_THROWS_AS(lik(Eigen::VectorXd::Zero(3)), ConfigError);
}

TEST_CASE("autocorrelation time of an AR(1) series") {
  // tau = (1 + rho) / (1 - rho) = 3 for rho = 0.5
  Rng rng(8);
  std::normal_distribution<double> normal;
  std::vector<double> x(400000);
  double v = 0.0;
  for (double& xi : x) {
    v = 0.5 * v + std::sqrt(0.75) * normal(rng);
    xi = v;
  }
  CHECK(autocorrelation_time(x) == doctest::Approx(3.0).epsilon(0.05));
  const std::vector<double> flat(50, 2.0);
  CHECK(autocorrelation_time(flat) == 50.0);
}

TEST_CASE("chain diagnostics") {
  const Chain c = constant_chain({5.0, 1.0, 2.0, 3.0, 4.0});
  const ChainDiagnostics d = chain_diagnostics(c, 1);
  CHECK(d.retained == 4);
  CHECK(d.mean[0] == doctest::Approx(2.5));
  CHECK(d.stddev[0] == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(d.effective_sample_size[0] == doctest::Approx(4.0 / d.autocorrelation_time[0]));
  CHECK_THROWS_AS(chain_diagnostics(c, 5), ConfigError);
}

TEST_CASE("Gelman-Rubin statistic") {
  // Two chains of length 4: means 2.5 and 4.5, within variance 5/3.
  const std::vector<Chain> chains{constant_chain({1, 2, 3, 4}), constant_chain({3, 4, 5, 6})};
  const double n = 4.0;
  const double w = 5.0 / 3.0;
  const double b = n * 2.0;  // n * var(2.5, 4.5)
  const double expected = std::sqrt(((n - 1.0) / n * w + b / n) / w);
  CHECK(gelman_rubin(chains, 0)[0] == doctest::Approx(expected));

  Rng rng(2);
  std::vector<Chain> mixed;
  for (int k = 0; k < 4; ++k) {
    Chain c;
    for (int i = 0; i < 5000; ++i) {
      c.samples.push_back(standard_normal(rng, 2));
    }
    mixed.push_back(c);
  }
  const Eigen::VectorXd r = gelman_rubin(mixed, 0);
  CHECK(r.maxCoeff() < 1.01);
}
