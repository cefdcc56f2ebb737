#pragma once

#include <stdexcept>
#include <string>

namespace prooflab {

// Caller broke a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Generator or experiment parameters outside their valid ranges.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An enumeration or size cap was exceeded.
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Conditioning on a null event (zero success-to-go, empty posterior support).
struct ConditioningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed config or serialized file.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace prooflab
