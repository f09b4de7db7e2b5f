#pragma once

#include <stdexcept>
#include <string>

namespace dte {

// Base class for every error raised by the library. Callers that only need
// a message can catch this; the CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A column, feature or class name that the schema cannot resolve.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (CSV cells, sample vectors, JSON documents).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace dte
