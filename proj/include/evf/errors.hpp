#pragma once

#include <stdexcept>
#include <string>

namespace evf {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad band edges, indivisible patch length, ...
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data does not satisfy a precondition: too-short session, no positives, ...
class DataError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API contract: backward twice, empty visible set, ...
class ContractError : public Error {
 public:
  using Error::Error;
};

// Tensor shape mismatch.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem or file-format failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace evf
