#pragma once

#include <stdexcept>
#include <string>

namespace psd {

// Invalid or inconsistent input data (bad arguments, malformed datasets).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed text in an on-disk file; message names the offending line.
class ParseError : public DataError {
 public:
  explicit ParseError(const std::string& msg) : DataError(msg) {}
};

// Numeric breakdown (NaN/Inf) detected during computation.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace psd
