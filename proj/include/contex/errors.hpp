#pragma once

#include <stdexcept>
#include <string>

namespace contex {

// Input data violates a structural invariant (shapes, labels, pairing, norms).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A scalar or enumerated parameter is outside its admissible range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The requested quantity is mathematically undefined for this input.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// API misuse, e.g. a forward cache that no longer matches its parameters.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Training produced a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace contex
