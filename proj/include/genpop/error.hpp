#pragma once

#include <stdexcept>
#include <string>

namespace genpop {

// Analysis failure: bad data, a model that cannot be fit, an empty subpopulation.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed user input to the CLI or a config file (exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace genpop
