#pragma once

#include <stdexcept>
#include <string>

namespace tribody {

// Lattice size violates a structural constraint (parity, 3-coloring, enumeration bound).
struct SizeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Input that makes a derived quantity undefined (e.g. zero susceptibility).
struct DegenerateInputError : std::domain_error {
  using std::domain_error::domain_error;
};

struct InsufficientDataError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Checkpoint or results do not belong to the lattice/disorder/schedule at hand.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace tribody
