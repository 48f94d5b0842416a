#pragma once

#include <stdexcept>
#include <string>

namespace semrecon {

/// Invalid input: wrong sizes, out-of-range parameters, malformed files.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or degenerate numerics encountered during evaluation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace semrecon
