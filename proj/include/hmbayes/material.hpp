#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace hmb {

inline constexpr std::size_t kNumMaterialParams = 8;

// Order of the material parameters wherever they are stored as an array
// (latent shift layout, prior tables, CSV columns).
enum class Param : std::size_t { w_f, w_80, lambda_0, b_tcs, mu, a, c_s, rho_s };

inline constexpr std::array<std::string_view, kNumMaterialParams> kParamNames = {
    "w_f", "w_80", "lambda_0", "b_tcs", "mu", "a", "c_s", "rho_s"};

/// Material properties of the Kuenzel model at one point of the domain.
struct MaterialParams {
  double w_f = 200.0;     ///< free water saturation [kg/m3]
  double w_80 = 100.0;    ///< water content at 80 % relative humidity [kg/m3]
  double lambda_0 = 0.3;  ///< dry thermal conductivity [W/(m K)]
  double b_tcs = 10.0;    ///< thermal conductivity supplement [-]
  double mu = 12.0;       ///< vapour diffusion resistance factor [-]
  double a = 0.6;         ///< water absorption coefficient [kg/(m2 s^0.5)]
  double c_s = 900.0;     ///< specific heat capacity [J/(kg K)]
  double rho_s = 1650.0;  ///< bulk density [kg/m3]

  double& operator[](Param p);
  double operator[](Param p) const;

  std::array<double, kNumMaterialParams> to_array() const;
  static MaterialParams from_array(const std::array<double, kNumMaterialParams>& v);
};

/// Temperature in degrees Celsius and relative humidity.
struct LocalState {
  double theta = 20.0;
  double phi = 0.5;
};

inline constexpr double kCelsiusToKelvin = 273.15;
inline constexpr double kPhiPoleMargin = 1e-9;

// Throws DegenerateParametersError unless every field is positive and
// w_80 < 0.8 w_f (the range where the isotherm factor b exceeds one).
void validate(const MaterialParams& p);

double approx_factor_b(const MaterialParams& p);

// Coefficient laws. Each throws SingularityError when phi >= b - 1e-9.
double thermal_conductivity(const MaterialParams& p, const LocalState& s);
double liquid_conduction(const MaterialParams& p, const LocalState& s);
double moisture_capacity(const MaterialParams& p, const LocalState& s);
double moisture_content(const MaterialParams& p, double phi);

double evaporation_enthalpy(const LocalState& s);
double vapour_permeability(const MaterialParams& p, const LocalState& s);
double saturation_pressure(const LocalState& s);
double saturation_pressure(double theta);
double enthalpy_capacity(const MaterialParams& p);

} // namespace hmb
