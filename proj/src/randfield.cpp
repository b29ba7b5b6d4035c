#include "hmbayes/randfield.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "hmbayes/error.hpp"

namespace hmb {

double covariance(const Point2& x, const Point2& y, const CovarianceSpec& spec) {
  return std::exp(-std::abs(x.x1 - y.x1) / spec.l_x1 - std::abs(x.x2 - y.x2) / spec.l_x2);
}

Eigen::MatrixXd assemble_covariance_matrix(std::span<const Point2> grid,
                                           const CovarianceSpec& spec) {
  if (!(spec.l_x1 > 0.0) || !(spec.l_x2 > 0.0)) {
    throw ConfigError("correlation lengths must be positive");
  }
  if (grid.empty()) {
    throw ConfigError("covariance grid is empty");
  }
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = covariance(grid[i], grid[j], spec);
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

KleBasis KleBasis::truncated(Eigen::Index m) const {
  if (m < 1 || m > size()) {
    throw ConfigError("KLE order " + std::to_string(m) + " outside [1, " +
                      std::to_string(size()) + "]");
  }
  KleBasis out = *this;
  out.order = m;
  return out;
}

double KleBasis::energy_fraction(Eigen::Index m) const {
  return eigenvalues.head(m).sum() / eigenvalues.sum();
}

KleBasis solve_kle(const Eigen::MatrixXd& cov, Eigen::Index order, std::vector<Point2> grid) {
  const Eigen::Index n = cov.rows();
  if (n == 0 || cov.cols() != n) {
    throw ConfigError("covariance matrix must be square and non-empty");
  }
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ConfigError("covariance matrix is not symmetric");
  }
  if (order < 1 || order > n) {
    throw ConfigError("KLE order " + std::to_string(order) + " outside [1, " +
                      std::to_string(n) + "]");
  }
  if (!grid.empty() && static_cast<Eigen::Index>(grid.size()) != n) {
    throw ConfigError("grid size does not match covariance matrix");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigensolver failed");
  }

  KleBasis basis;
  basis.eigenvalues = solver.eigenvalues().reverse();
  basis.eigenvectors = solver.eigenvectors().rowwise().reverse();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index imax = 0;
    basis.eigenvectors.col(k).cwiseAbs().maxCoeff(&imax);
    if (basis.eigenvectors(imax, k) < 0.0) {
      basis.eigenvectors.col(k) *= -1.0;
    }
  }
  basis.order = order;
  basis.grid = std::move(grid);
  return basis;
}

KleBasis build_kle_basis(std::span<const Point2> grid, const CovarianceSpec& spec,
                         Eigen::Index order) {
  return solve_kle(assemble_covariance_matrix(grid, spec), order,
                   std::vector<Point2>(grid.begin(), grid.end()));
}

Eigen::VectorXd sample_gaussian_field(const KleBasis& basis, std::span<const double> xi_kle) {
  if (static_cast<Eigen::Index>(xi_kle.size()) != basis.order) {
    throw ConfigError("expected " + std::to_string(basis.order) + " KLE coefficients, got " +
                      std::to_string(xi_kle.size()));
  }
  Eigen::VectorXd field = Eigen::VectorXd::Zero(basis.size());
  for (Eigen::Index i = 0; i < basis.order; ++i) {
    field += std::sqrt(std::max(basis.eigenvalues[i], 0.0)) * xi_kle[i] *
             basis.eigenvectors.col(i);
  }
  return field;
}

LognormalMoments moments_to_gaussian(double mu_q, double sigma_q) {
  if (!(mu_q > 0.0) || !std::isfinite(mu_q)) {
    throw ConfigError("lognormal prior mean must be positive");
  }
  if (!(sigma_q >= 0.0) || !std::isfinite(sigma_q)) {
    throw ConfigError("lognormal prior standard deviation must be non-negative");
  }
  const double cv = sigma_q / mu_q;
  const double var_g = std::log1p(cv * cv);
  return {mu_q, sigma_q, std::log(mu_q) - 0.5 * var_g, std::sqrt(var_g)};
}

MaterialParams ParameterFields::at(Eigen::Index element) const {
  std::array<double, kNumMaterialParams> v{};
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    v[k] = values[k][element];
  }
  return MaterialParams::from_array(v);
}

ParameterFields ParameterFields::uniform(const MaterialParams& p, Eigen::Index n) {
  ParameterFields out;
  const auto v = p.to_array();
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    out.values[k] = Eigen::VectorXd::Constant(n, v[k]);
  }
  return out;
}

ParameterFields realize_parameter_fields(const KleBasis& basis, const PriorMoments& moments,
                                         std::span<const double> xi) {
  const LatentLayout layout{basis.order};
  if (static_cast<Eigen::Index>(xi.size()) != layout.size()) {
    throw ConfigError("latent vector has length " + std::to_string(xi.size()) +
                      ", expected " + std::to_string(layout.size()));
  }
  const Eigen::VectorXd fluctuation =
      sample_gaussian_field(basis, xi.subspan(static_cast<std::size_t>(layout.kle_offset())));
  ParameterFields fields;
  for (std::size_t k = 0; k < kNumMaterialParams; ++k) {
    const LognormalMoments& m = moments[k];
    fields.values[k] =
        (m.mu_g + m.sigma_g * xi[k] + m.sigma_g * fluctuation.array()).exp().matrix();
  }
  return fields;
}

double truncation_error(std::span<const Eigen::VectorXd> reference,
                        std::span<const Eigen::VectorXd> approx) {
  if (reference.size() != approx.size() || reference.empty()) {
    throw ConfigError("truncation error needs matching, non-empty realization sets");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < reference.size(); ++j) {
    if (reference[j].size() != approx[j].size() || reference[j].size() == 0) {
      throw ConfigError("truncation error realizations differ in size");
    }
    total += ((reference[j] - approx[j]).array().abs() / reference[j].array().abs()).mean();
  }
  return total / static_cast<double>(reference.size());
}

} // namespace hmb
