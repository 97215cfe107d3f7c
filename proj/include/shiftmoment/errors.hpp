#pragma once

#include <stdexcept>
#include <string>

namespace shiftmoment {

/// Invalid parameters or an unusable combination of options (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or missing input data (CLI exit code 3).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point outside the unit cube was passed to a density or model.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Source density vanishes where a likelihood ratio was requested.
class DegeneratePairError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace shiftmoment
