#pragma once

#include <stdexcept>
#include <string>

namespace latnr {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (bad cell, wrong column count); carries the row number.
struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t row)
      : Error(msg + " (row " + std::to_string(row) + ")"), row(row) {}
  std::size_t row;
};

// Input violates a declared schema (missing column, too few items).
struct SchemaError : Error {
  using Error::Error;
};

// Data violates a domain invariant (pi out of range, inconsistent flags).
struct ValidationError : Error {
  using Error::Error;
};

// A numerical routine produced a non-finite or impossible value.
struct NumericError : Error {
  using Error::Error;
};

// An iterative solver hit its iteration cap without meeting tolerance.
struct ConvergenceError : Error {
  using Error::Error;
};

}  // namespace latnr
