#pragma once

#include <stdexcept>
#include <string>

namespace biaslab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable files, malformed inputs, invalid configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or runaway losses during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace biaslab
