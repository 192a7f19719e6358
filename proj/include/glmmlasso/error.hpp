#pragma once

#include <stdexcept>
#include <string>

namespace glmmlasso {

// Input that violates a documented precondition (domain, shape, schema).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Iterative procedure ran out of budget; carries a human-readable reason.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedModel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace glmmlasso
