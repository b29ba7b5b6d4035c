#include "hmbayes/fem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "hmbayes/error.hpp"

namespace hmb {

namespace {

using Triplet = Eigen::Triplet<double>;

// Gradient products of the linear shape functions, scaled by the area.
Eigen::Matrix3d triangle_stiffness(const Point2& a, const Point2& b, const Point2& c) {
  const double twice_area = (b.x1 - a.x1) * (c.x2 - a.x2) - (c.x1 - a.x1) * (b.x2 - a.x2);
  Eigen::Matrix<double, 3, 2> grad;
  grad << b.x2 - c.x2, c.x1 - b.x1,
          c.x2 - a.x2, a.x1 - c.x1,
          a.x2 - b.x2, b.x1 - a.x1;
  grad /= twice_area;
  return 0.5 * twice_area * grad * grad.transpose();
}

double scaled_increment(const Eigen::VectorXd& next, const Eigen::VectorXd& prev) {
  return (next - prev).lpNorm<Eigen::Infinity>() / std::max(next.lpNorm<Eigen::Infinity>(), 1.0);
}

} // namespace

void SolverConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ConfigError("solver time step must be positive");
  }
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) {
    throw ConfigError("solver horizon must be non-negative");
  }
  if (!(picard_tol > 0.0)) {
    throw ConfigError("Picard tolerance must be positive");
  }
  if (picard_max < 1) {
    throw ConfigError("Picard iteration limit must be at least 1");
  }
}

ElementCoefficients kunzel_coefficients(const MaterialParams& p, const LocalState& s) {
  ElementCoefficients c;
  c.heat_capacity = enthalpy_capacity(p);
  c.conductivity = thermal_conductivity(p, s);
  c.latent_heat = evaporation_enthalpy(s);
  c.vapour_permeability = vapour_permeability(p, s);
  c.moisture_capacity = moisture_capacity(p, s);
  c.liquid_conduction = liquid_conduction(p, s);
  return c;
}

struct HeatMoistureModel::Workspace {
  Eigen::SparseLU<SparseMatrix> moisture_solver;
  Eigen::SimplicialLDLT<SparseMatrix> heat_solver;
  bool analyzed = false;
  std::vector<Triplet> triplets;
  SparseMatrix moisture_matrix;
  SparseMatrix heat_matrix;
};

HeatMoistureModel::HeatMoistureModel(Mesh mesh, BoundaryConditions bc,
                                     CoefficientModel coefficients)
    : mesh_(std::move(mesh)), bc_(bc), coefficients_(std::move(coefficients)) {
  if (!coefficients_) {
    throw ConfigError("coefficient model must be callable");
  }
  const int n = mesh_.num_nodes();
  free_index_.assign(static_cast<std::size_t>(n), 0);
  dirichlet_theta_ = Eigen::VectorXd::Zero(n);
  dirichlet_phi_ = Eigen::VectorXd::Zero(n);
  for (int node : mesh_.dirichlet_left) {
    free_index_[node] = -1;
    dirichlet_theta_[node] = bc_.exterior.theta;
    dirichlet_phi_[node] = bc_.exterior.phi;
  }
  for (int node : mesh_.dirichlet_right) {
    free_index_[node] = -1;
    dirichlet_theta_[node] = bc_.interior.theta;
    dirichlet_phi_[node] = bc_.interior.phi;
  }
  int next = 0;
  for (int node = 0; node < n; ++node) {
    if (free_index_[node] == 0) {
      free_index_[node] = next++;
      free_nodes_.push_back(node);
    }
  }
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const auto& [a, b, c] = mesh_.elements[e];
    const double area = mesh_.area(e);
    if (!(area > 0.0)) {
      throw ConfigError("mesh element " + std::to_string(e) + " has non-positive area");
    }
    areas_.push_back(area);
    unit_stiffness_.push_back(triangle_stiffness(mesh_.nodes[a], mesh_.nodes[b], mesh_.nodes[c]));
  }
}

SimState HeatMoistureModel::uniform_state(const LocalState& s) const {
  const int n = mesh_.num_nodes();
  return {Eigen::VectorXd::Constant(n, s.theta), Eigen::VectorXd::Constant(n, s.phi), 0.0};
}

std::vector<ElementCoefficients>
HeatMoistureModel::element_coefficients(const ParameterFields& fields,
                                        const SimState& state) const {
  if (fields.size() != mesh_.num_elements()) {
    throw ConfigError("parameter fields have " + std::to_string(fields.size()) +
                      " entries, mesh has " + std::to_string(mesh_.num_elements()) +
                      " elements");
  }
  std::vector<ElementCoefficients> out;
  out.reserve(static_cast<std::size_t>(mesh_.num_elements()));
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const auto& [a, b, c] = mesh_.elements[e];
    const LocalState local{(state.theta[a] + state.theta[b] + state.theta[c]) / 3.0,
                           (state.phi[a] + state.phi[b] + state.phi[c]) / 3.0};
    out.push_back(coefficients_(fields.at(e), local));
  }
  return out;
}

SystemMatrices HeatMoistureModel::assemble(const ParameterFields& fields,
                                           const SimState& state) const {
  const int n = mesh_.num_nodes();
  const auto coeffs = element_coefficients(fields, state);
  SystemMatrices sys;
  sys.heat_capacity = Eigen::VectorXd::Zero(n);
  sys.moisture_capacity = Eigen::VectorXd::Zero(n);
  sys.saturation_pressure = state.theta.unaryExpr([](double t) { return saturation_pressure(t); });

  std::vector<Triplet> heat, liquid, vapour, latent;
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const auto& nodes = mesh_.elements[e];
    const ElementCoefficients& c = coeffs[e];
    const Eigen::Matrix3d& k = unit_stiffness_[e];
    for (int i = 0; i < 3; ++i) {
      sys.heat_capacity[nodes[i]] += c.heat_capacity * areas_[e] / 3.0;
      sys.moisture_capacity[nodes[i]] += c.moisture_capacity * areas_[e] / 3.0;
      for (int j = 0; j < 3; ++j) {
        heat.emplace_back(nodes[i], nodes[j], c.conductivity * k(i, j));
        liquid.emplace_back(nodes[i], nodes[j], c.liquid_conduction * k(i, j));
        vapour.emplace_back(nodes[i], nodes[j], c.vapour_permeability * k(i, j));
        latent.emplace_back(nodes[i], nodes[j],
                            c.latent_heat * c.vapour_permeability * k(i, j));
      }
    }
  }
  auto build = [n](SparseMatrix& m, const std::vector<Triplet>& t) {
    m.resize(n, n);
    m.setFromTriplets(t.begin(), t.end());
  };
  build(sys.heat_conductivity, heat);
  build(sys.liquid_conductivity, liquid);
  build(sys.vapour_conductivity, vapour);
  build(sys.latent_conductivity, latent);
  return sys;
}

SimState HeatMoistureModel::advance(const SimState& state, double dt, const SolverConfig& cfg,
                                    const ParameterFields& fields, Workspace& ws) const {
  const int n = mesh_.num_nodes();
  const auto nf = static_cast<Eigen::Index>(free_nodes_.size());

  SimState iterate = state;
  for (int node = 0; node < n; ++node) {
    if (free_index_[node] < 0) {
      iterate.theta[node] = dirichlet_theta_[node];
      iterate.phi[node] = dirichlet_phi_[node];
    }
  }

  Eigen::VectorXd cap_theta(n);
  Eigen::VectorXd cap_phi(n);
  Eigen::VectorXd psat(n);
  Eigen::VectorXd rhs(nf);
  Eigen::VectorXd sol(nf);
  double increment = 0.0;

  for (int it = 1; it <= cfg.picard_max; ++it) {
    const auto coeffs = element_coefficients(fields, iterate);
    for (int node = 0; node < n; ++node) {
      psat[node] = saturation_pressure(iterate.theta[node]);
    }

    // Moisture balance with frozen coefficients.
    cap_phi.setZero();
    cap_theta.setZero();
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      for (int node : mesh_.elements[e]) {
        cap_phi[node] += coeffs[e].moisture_capacity * areas_[e] / 3.0;
        cap_theta[node] += coeffs[e].heat_capacity * areas_[e] / 3.0;
      }
    }
    ws.triplets.clear();
    for (Eigen::Index f = 0; f < nf; ++f) {
      const int node = free_nodes_[f];
      ws.triplets.emplace_back(f, f, cap_phi[node] / dt);
      rhs[f] = cap_phi[node] / dt * state.phi[node];
    }
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto& nodes = mesh_.elements[e];
      const Eigen::Matrix3d& k = unit_stiffness_[e];
      for (int i = 0; i < 3; ++i) {
        const int fi = free_index_[nodes[i]];
        if (fi < 0) {
          continue;
        }
        for (int j = 0; j < 3; ++j) {
          const int nj = nodes[j];
          const double v = (coeffs[e].liquid_conduction +
                            coeffs[e].vapour_permeability * psat[nj]) * k(i, j);
          const int fj = free_index_[nj];
          if (fj >= 0) {
            ws.triplets.emplace_back(fi, fj, v);
          } else {
            rhs[fi] -= v * dirichlet_phi_[nj];
          }
        }
      }
    }
    ws.moisture_matrix.resize(nf, nf);
    ws.moisture_matrix.setFromTriplets(ws.triplets.begin(), ws.triplets.end());
    if (!ws.analyzed) {
      ws.moisture_solver.analyzePattern(ws.moisture_matrix);
    }
    ws.moisture_solver.factorize(ws.moisture_matrix);
    if (ws.moisture_solver.info() != Eigen::Success) {
      throw NumericalError("moisture system factorization failed");
    }
    sol = ws.moisture_solver.solve(rhs);
    Eigen::VectorXd phi_next = iterate.phi;
    for (Eigen::Index f = 0; f < nf; ++f) {
      phi_next[free_nodes_[f]] = sol[f];
    }

    // Energy balance; the latent term uses the updated vapour pressure.
    ws.triplets.clear();
    for (Eigen::Index f = 0; f < nf; ++f) {
      const int node = free_nodes_[f];
      ws.triplets.emplace_back(f, f, cap_theta[node] / dt);
      rhs[f] = cap_theta[node] / dt * state.theta[node];
    }
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto& nodes = mesh_.elements[e];
      const Eigen::Matrix3d& k = unit_stiffness_[e];
      const double latent = coeffs[e].latent_heat * coeffs[e].vapour_permeability;
      for (int i = 0; i < 3; ++i) {
        const int fi = free_index_[nodes[i]];
        if (fi < 0) {
          continue;
        }
        for (int j = 0; j < 3; ++j) {
          const int nj = nodes[j];
          rhs[fi] -= latent * k(i, j) * psat[nj] * phi_next[nj];
          const double v = coeffs[e].conductivity * k(i, j);
          const int fj = free_index_[nj];
          if (fj >= 0) {
            ws.triplets.emplace_back(fi, fj, v);
          } else {
            rhs[fi] -= v * dirichlet_theta_[nj];
          }
        }
      }
    }
    ws.heat_matrix.resize(nf, nf);
    ws.heat_matrix.setFromTriplets(ws.triplets.begin(), ws.triplets.end());
    if (!ws.analyzed) {
      ws.heat_solver.analyzePattern(ws.heat_matrix);
      ws.analyzed = true;
    }
    ws.heat_solver.factorize(ws.heat_matrix);
    if (ws.heat_solver.info() != Eigen::Success) {
      throw NumericalError("heat system factorization failed");
    }
    sol = ws.heat_solver.solve(rhs);
    Eigen::VectorXd theta_next = iterate.theta;
    for (Eigen::Index f = 0; f < nf; ++f) {
      theta_next[free_nodes_[f]] = sol[f];
    }

    if (!theta_next.allFinite() || !phi_next.allFinite()) {
      throw NumericalError("non-finite state at t = " + std::to_string(state.t + dt) + " s");
    }
    increment = std::max(scaled_increment(theta_next, iterate.theta),
                         scaled_increment(phi_next, iterate.phi));
    iterate.theta = std::move(theta_next);
    iterate.phi = std::move(phi_next);
    if (increment < cfg.picard_tol) {
      iterate.t = state.t + dt;
      return iterate;
    }
  }
  std::ostringstream msg;
  msg << "Picard iteration did not converge at t = " << state.t + dt << " s after "
      << cfg.picard_max << " sweeps (last increment " << increment << ", tolerance "
      << cfg.picard_tol << ")";
  throw DivergedStepError(msg.str(), state.t + dt, cfg.picard_max, increment);
}

SimState HeatMoistureModel::step(const SimState& state, const SolverConfig& cfg,
                                 const ParameterFields& fields) const {
  cfg.validate();
  Workspace ws;
  return advance(state, cfg.dt, cfg, fields, ws);
}

Trajectory HeatMoistureModel::solve(const SimState& initial, const SolverConfig& cfg,
                                    const ParameterFields& fields,
                                    std::span<const double> record_times) const {
  cfg.validate();
  std::vector<double> times(record_times.begin(), record_times.end());
  std::sort(times.begin(), times.end());
  for (double r : times) {
    if (!(r >= initial.t) || r > cfg.t_end) {
      std::ostringstream msg;
      msg << "record time " << r << " s outside [" << initial.t << ", " << cfg.t_end << "]";
      throw ConfigError(msg.str());
    }
  }

  Trajectory traj;
  Workspace ws;
  SimState current = initial;
  const double eps = 1e-9 * cfg.dt;
  for (double target : times) {
    while (current.t < target - eps) {
      double h = std::min(cfg.dt, target - current.t);
      if (target - (current.t + h) < eps) {
        h = target - current.t;
      }
      current = advance(current, h, cfg, fields, ws);
      if (std::abs(current.t - target) < eps) {
        current.t = target;
      }
    }
    traj.times.push_back(target);
    traj.states.push_back(current);
  }
  return traj;
}

BoundaryFlux HeatMoistureModel::boundary_heat_flux(const ParameterFields& fields,
                                                   const SimState& state) const {
  const SystemMatrices sys = assemble(fields, state);
  const Eigen::VectorXd vapour_pressure = sys.saturation_pressure.cwiseProduct(state.phi);
  const Eigen::VectorXd reaction =
      sys.heat_conductivity * state.theta + sys.latent_conductivity * vapour_pressure;
  BoundaryFlux flux;
  for (int node : mesh_.dirichlet_left) {
    flux.exterior += reaction[node];
  }
  for (int node : mesh_.dirichlet_right) {
    flux.interior += reaction[node];
  }
  return flux;
}

} // namespace hmb
