// Error taxonomy shared by all modules.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ig {

// A requested configuration is outside what the algorithms support
// (e.g. virtual-noise calibration needs fewer variables than observations).
class unsupported_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An object's numeric state violates a precondition (e.g. nonpositive
// precision encountered when converting natural parameters to moments).
class state_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iteration produced a non-finite value; carries the iteration index.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(const std::string& what, std::int64_t iteration)
      : std::runtime_error(what), iteration(iteration) {}
  std::int64_t iteration;
};

// An iterative routine hit its iteration cap; carries the last estimate.
class iteration_limit_error : public std::runtime_error {
 public:
  iteration_limit_error(const std::string& what, double last_estimate)
      : std::runtime_error(what), last_estimate(last_estimate) {}
  double last_estimate;
};

}  // namespace ig
