#pragma once

#include <stdexcept>
#include <string>

namespace roughdot {

// Invalid user input: bad parameter values, malformed files, out-of-range
// queries. CLI maps this to exit code 1.
class ParameterError : public std::runtime_error {
 public:
  explicit ParameterError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numerical procedure failed: non-convergent solve, singular fit,
// unusable Monte Carlo chain. CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace roughdot
