#pragma once

#include <stdexcept>
#include <string>

namespace vidq {

// Base class for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape, range or configuration contract violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed input data: text files, binary containers, missing records.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace vidq
