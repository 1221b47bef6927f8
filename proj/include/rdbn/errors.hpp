#pragma once

#include <stdexcept>
#include <string>

namespace rdbn {

/// Invalid argument to a sampler, model operation or configuration.
class ParameterError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (edge lists, masks, checkpoints).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Numerical degeneracy or broken internal invariant inside the sampler.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace rdbn
