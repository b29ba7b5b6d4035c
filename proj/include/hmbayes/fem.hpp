#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "hmbayes/material.hpp"
#include "hmbayes/mesh.hpp"
#include "hmbayes/randfield.hpp"

namespace hmb {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Nodal temperature [degC] and relative humidity [-] at time t [s].
struct SimState {
  Eigen::VectorXd theta;
  Eigen::VectorXd phi;
  double t = 0.0;
};

struct SolverConfig {
  double dt = 3600.0;               ///< time step [s]
  double t_end = 200.0 * 3600.0;    ///< horizon [s]
  double picard_tol = 1e-8;         ///< relative increment tolerance
  int picard_max = 50;

  void validate() const;
};

/// Prescribed (theta, phi) on the two loaded edges.
struct BoundaryConditions {
  LocalState exterior{5.0, 0.5};   ///< x1 = 0
  LocalState interior{24.0, 0.8};  ///< x1 = width
};

/// Coefficients of both balance equations on one element.
struct ElementCoefficients {
  double heat_capacity = 0.0;       ///< dH/dtheta [J/(m3 K)]
  double conductivity = 0.0;        ///< lambda [W/(m K)]
  double latent_heat = 0.0;         ///< h_v [J/kg]
  double vapour_permeability = 0.0; ///< delta_p [kg/(m s Pa)]
  double moisture_capacity = 0.0;   ///< dw/dphi [kg/m3]
  double liquid_conduction = 0.0;   ///< D_phi [kg/(m s)]
};

using CoefficientModel =
    std::function<ElementCoefficients(const MaterialParams&, const LocalState&)>;

ElementCoefficients kunzel_coefficients(const MaterialParams& p, const LocalState& s);

/// Global operators of the semi-discrete system at one state. Storage is
/// lumped, so the capacity "matrices" are nodal diagonals.
///
///   C_theta dtheta/dt + K_lambda theta + K_latent (P phi) = 0
///   C_phi   dphi/dt   + K_liquid phi   + K_vapour (P phi) = 0
///
/// with P = diag(p_sat(theta_i)), i.e. the vapour pressure phi p_sat(theta)
/// is interpolated from its nodal values.
struct SystemMatrices {
  Eigen::VectorXd heat_capacity;
  Eigen::VectorXd moisture_capacity;
  SparseMatrix heat_conductivity;
  SparseMatrix liquid_conductivity;
  SparseMatrix vapour_conductivity;
  SparseMatrix latent_conductivity;
  Eigen::VectorXd saturation_pressure;
};

/// Heat inflow [W/m] through each loaded edge, from the nodal reactions.
struct BoundaryFlux {
  double exterior = 0.0;
  double interior = 0.0;
};

/// Snapshots in increasing time order.
struct Trajectory {
  std::vector<double> times;
  std::vector<SimState> states;

  bool empty() const { return states.empty(); }
};

/// Transient coupled heat and moisture transport on a triangulated rectangle
/// with linear elements and element-wise constant material parameters.
///
/// Time integration is backward Euler. Each step runs a Picard loop that
/// freezes the coefficients at the latest iterate; since the moisture balance
/// does not involve theta once p_sat is frozen, each Picard sweep solves the
/// moisture system first and then the heat system with the updated phi.
/// Instances are immutable, so one model may be shared by concurrent solves.
class HeatMoistureModel {
public:
  explicit HeatMoistureModel(Mesh mesh, BoundaryConditions bc = {},
                             CoefficientModel coefficients = kunzel_coefficients);

  const Mesh& mesh() const { return mesh_; }
  const BoundaryConditions& boundary() const { return bc_; }

  SimState uniform_state(const LocalState& s) const;

  SystemMatrices assemble(const ParameterFields& fields, const SimState& state) const;

  // One backward-Euler step of length cfg.dt. Throws DivergedStepError when
  // the Picard loop does not reach cfg.picard_tol within cfg.picard_max sweeps.
  SimState step(const SimState& state, const SolverConfig& cfg,
                const ParameterFields& fields) const;

  // Snapshots at `record_times` [s], which must lie within [0, cfg.t_end].
  // Steps are shortened where needed to land on each record time exactly.
  Trajectory solve(const SimState& initial, const SolverConfig& cfg,
                   const ParameterFields& fields, std::span<const double> record_times) const;

  BoundaryFlux boundary_heat_flux(const ParameterFields& fields, const SimState& state) const;

private:
  struct Workspace;

  SimState advance(const SimState& state, double dt, const SolverConfig& cfg,
                   const ParameterFields& fields, Workspace& ws) const;
  std::vector<ElementCoefficients> element_coefficients(const ParameterFields& fields,
                                                        const SimState& state) const;

  Mesh mesh_;
  BoundaryConditions bc_;
  CoefficientModel coefficients_;
  std::vector<int> free_index_;       // -1 for Dirichlet nodes
  std::vector<int> free_nodes_;
  Eigen::VectorXd dirichlet_theta_;   // prescribed values, indexed by node
  Eigen::VectorXd dirichlet_phi_;
  std::vector<Eigen::Matrix3d> unit_stiffness_;
  std::vector<double> areas_;
};

} // namespace hmb
