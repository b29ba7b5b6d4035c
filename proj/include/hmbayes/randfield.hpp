#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hmbayes/material.hpp"
#include "hmbayes/point.hpp"

namespace hmb {

/// Correlation lengths of the separable exponential kernel [m].
struct CovarianceSpec {
  double l_x1 = 0.1;
  double l_x2 = 0.04;
};

double covariance(const Point2& x, const Point2& y, const CovarianceSpec& spec);

Eigen::MatrixXd assemble_covariance_matrix(std::span<const Point2> grid,
                                           const CovarianceSpec& spec);

/// Discrete Karhunen-Loeve basis: the full eigen-decomposition of the
/// covariance matrix on `grid`, with the first `order` modes active.
///
/// Eigenvalues are sorted in descending order; eigenvectors are the matching
/// columns, orthonormal in the Euclidean inner product on grid values. The
/// sign of each eigenvector is fixed so that its largest-magnitude entry is
/// positive, which makes the basis reproducible across eigensolver versions.
struct KleBasis {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  Eigen::Index order = 0;
  std::vector<Point2> grid;

  Eigen::Index size() const { return eigenvalues.size(); }

  // Same spectrum, different truncation order. Throws ConfigError unless 1 <= m <= n.
  KleBasis truncated(Eigen::Index m) const;

  // Sum of the first m eigenvalues divided by the trace.
  double energy_fraction(Eigen::Index m) const;
};

// Throws ConfigError for a non-symmetric matrix or M outside [1, n].
KleBasis solve_kle(const Eigen::MatrixXd& cov, Eigen::Index order,
                   std::vector<Point2> grid = {});

KleBasis build_kle_basis(std::span<const Point2> grid, const CovarianceSpec& spec,
                         Eigen::Index order);

// sum_{i<M} sqrt(eigenvalue_i) xi_i psi_i
Eigen::VectorXd sample_gaussian_field(const KleBasis& basis,
                                      std::span<const double> xi_kle);

struct LognormalMoments {
  double mu_q = 1.0;
  double sigma_q = 0.0;
  double mu_g = 0.0;
  double sigma_g = 0.0;
};

// Throws ConfigError for mu_q <= 0 or sigma_q < 0.
LognormalMoments moments_to_gaussian(double mu_q, double sigma_q);

using PriorMoments = std::array<LognormalMoments, kNumMaterialParams>;

/// Element-wise values of each material parameter.
struct ParameterFields {
  std::array<Eigen::VectorXd, kNumMaterialParams> values;

  Eigen::Index size() const { return values[0].size(); }
  const Eigen::VectorXd& operator[](Param p) const {
    return values[static_cast<std::size_t>(p)];
  }
  Eigen::VectorXd& operator[](Param p) { return values[static_cast<std::size_t>(p)]; }

  MaterialParams at(Eigen::Index element) const;

  static ParameterFields uniform(const MaterialParams& p, Eigen::Index n);
};

/// Index layout of a latent vector: kNumMaterialParams per-parameter shifts
/// followed by `kle_order` shared KLE coefficients.
struct LatentLayout {
  Eigen::Index kle_order = 0;

  static constexpr Eigen::Index kShifts = static_cast<Eigen::Index>(kNumMaterialParams);
  Eigen::Index size() const { return kShifts + kle_order; }
  Eigen::Index kle_offset() const { return kShifts; }
};

// q = exp(mu_g + sigma_g xi_{q,0} + sigma_g sum sqrt(s_i) xi_i psi_i) per parameter.
// `xi` must have length kNumMaterialParams + basis.order.
ParameterFields realize_parameter_fields(const KleBasis& basis, const PriorMoments& moments,
                                         std::span<const double> xi);

/// Mean over realizations of the mean point-wise relative deviation
/// |q - q_hat| / |q|. Both spans hold one vector per realization.
double truncation_error(std::span<const Eigen::VectorXd> reference,
                        std::span<const Eigen::VectorXd> approx);

} // namespace hmb
