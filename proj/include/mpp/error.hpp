#pragma once

#include <stdexcept>
#include <string>

namespace mpp {

/// Invalid model, integrand, grid or experiment description.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data inconsistent with the model it is evaluated under.
class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Problem too large for an exhaustive solver.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Series evaluated outside its region of convergence.
class DivergenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A quantity that must be nonzero (a denominator, an exponential) vanished.
class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// No parameter value is compatible with the data.
class InfeasibleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace mpp
