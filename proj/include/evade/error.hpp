#pragma once

#include <stdexcept>
#include <string>

namespace evade {

// Malformed input, broken invariants, unparseable model output.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model response that could not be turned into the expected value.
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

// Network or backend failure, missing credentials, unscripted mock request.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evade
