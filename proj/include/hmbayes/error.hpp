#pragma once

#include <stdexcept>
#include <string>

namespace hmb {

// Invalid configuration or violated input contract. CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure in a coefficient law or the solver. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Relative humidity reached the pole of the sorption isotherm (phi >= b).
class SingularityError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// Material parameters for which a coefficient law is undefined.
class DegenerateParametersError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// Picard iteration did not converge within the iteration budget.
class DivergedStepError : public NumericalError {
public:
  DivergedStepError(const std::string& what, double time, int iterations,
                    double last_increment)
      : NumericalError(what), time_(time), iterations_(iterations),
        last_increment_(last_increment) {}

  double time() const { return time_; }
  int iterations() const { return iterations_; }
  double last_increment() const { return last_increment_; }

private:
  double time_;
  int iterations_;
  double last_increment_;
};

// Malformed or inconsistent artifact on disk. CLI exit code 4.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace hmb
