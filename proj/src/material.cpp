#include "hmbayes/material.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hmbayes/error.hpp"

namespace hmb {

namespace {

double* field_ptr(MaterialParams& p, Param which) {
  switch (which) {
  case Param::w_f: return &p.w_f;
  case Param::w_80: return &p.w_80;
  case Param::lambda_0: return &p.lambda_0;
  case Param::b_tcs: return &p.b_tcs;
  case Param::mu: return &p.mu;
  case Param::a: return &p.a;
  case Param::c_s: return &p.c_s;
  case Param::rho_s: return &p.rho_s;
  }
  throw ConfigError("unknown material parameter index");
}

// b for a parameter set, plus the pole check shared by every phi-dependent law.
double checked_b(const MaterialParams& p, double phi) {
  const double b = approx_factor_b(p);
  if (!(b > 1.0)) {
    throw DegenerateParametersError("isotherm factor b must exceed 1 (requires w_80 < 0.8 w_f)");
  }
  if (!std::isfinite(phi) || phi >= b - kPhiPoleMargin) {
    std::ostringstream msg;
    msg << "relative humidity " << phi << " at or beyond isotherm pole b = " << b;
    throw SingularityError(msg.str());
  }
  return b;
}

} // namespace

double& MaterialParams::operator[](Param which) { return *field_ptr(*this, which); }

double MaterialParams::operator[](Param which) const {
  return *field_ptr(const_cast<MaterialParams&>(*this), which);
}

std::array<double, kNumMaterialParams> MaterialParams::to_array() const {
  return {w_f, w_80, lambda_0, b_tcs, mu, a, c_s, rho_s};
}

MaterialParams MaterialParams::from_array(const std::array<double, kNumMaterialParams>& v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
}

void validate(const MaterialParams& p) {
  const auto values = p.to_array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
      throw DegenerateParametersError("material parameter " + std::string(kParamNames[i]) +
                                      " must be finite and positive");
    }
  }
  if (!(p.w_80 < 0.8 * p.w_f)) {
    throw DegenerateParametersError("w_80 must be below 0.8 w_f for an isotherm factor b > 1");
  }
}

double approx_factor_b(const MaterialParams& p) {
  const double denom = p.w_80 - 0.8 * p.w_f;
  if (std::abs(denom) <= 1e-12 * std::max(1.0, std::abs(p.w_f))) {
    throw DegenerateParametersError("isotherm factor b undefined: w_80 == 0.8 w_f");
  }
  return 0.8 * (p.w_80 - p.w_f) / denom;
}

double thermal_conductivity(const MaterialParams& p, const LocalState& s) {
  const double b = checked_b(p, s.phi);
  return p.lambda_0 * (1.0 + p.b_tcs * p.w_f * (b - 1.0) * s.phi / (p.rho_s * (b - s.phi)));
}

double evaporation_enthalpy(const LocalState& s) {
  const double t_abs = s.theta + kCelsiusToKelvin;
  if (!(t_abs > 0.0)) {
    throw ConfigError("absolute temperature must be positive");
  }
  return 2.5008e6 * std::pow(kCelsiusToKelvin / t_abs, 0.167 + 3.67e-4 * t_abs);
}

double vapour_permeability(const MaterialParams& p, const LocalState& s) {
  return 1.9446e-12 / p.mu * std::pow(s.theta + kCelsiusToKelvin, 0.81);
}

double saturation_pressure(double theta) {
  return 611.0 * std::exp(17.08 * theta / (234.18 + theta));
}

double saturation_pressure(const LocalState& s) { return saturation_pressure(s.theta); }

double liquid_conduction(const MaterialParams& p, const LocalState& s) {
  const double b = checked_b(p, s.phi);
  if (p.w_f == 1.0) {
    throw DegenerateParametersError("liquid conduction undefined for w_f == 1");
  }
  const double gap = b - s.phi;
  const double exponent = 3.0 * p.w_f * (b - 1.0) * s.phi / (gap * (p.w_f - 1.0));
  const double d = 3.8 * (p.a * p.a / p.w_f) * std::pow(10.0, exponent) * b * (b - 1.0) /
                   (gap * gap);
  if (!std::isfinite(d)) {
    throw SingularityError("liquid conduction coefficient overflowed");
  }
  return d;
}

double enthalpy_capacity(const MaterialParams& p) { return p.rho_s * p.c_s; }

double moisture_content(const MaterialParams& p, double phi) {
  const double b = checked_b(p, phi);
  return p.w_f * (b - 1.0) * phi / (b - phi);
}

double moisture_capacity(const MaterialParams& p, const LocalState& s) {
  const double b = checked_b(p, s.phi);
  const double gap = b - s.phi;
  return p.w_f * (b - 1.0) * b / (gap * gap);
}

} // namespace hmb
