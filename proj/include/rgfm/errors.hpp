#pragma once

#include <stdexcept>
#include <string>

namespace rgfm {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A point violates the quadric constraint of its space.
class ManifoldError : public Error {
 public:
  using Error::Error;
};

class TangencyError : public Error {
 public:
  using Error::Error;
};

// Spherical exponential map beyond the injectivity radius.
class InjectivityError : public Error {
 public:
  using Error::Error;
};

// Antipodal pair on the sphere (log map, parallel transport).
class DegeneratePairError : public Error {
 public:
  using Error::Error;
};

// W * x_s vanished in the manifold-preserving linear map.
class DegenerateDirectionError : public Error {
 public:
  using Error::Error;
};

class DegenerateMidpointError : public Error {
 public:
  using Error::Error;
};

// Operation not defined in the Euclidean (zero curvature) mode.
class UnsupportedModeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// An input file does not exist.
class MissingFileError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API contract (e.g. backward from a non-scalar node).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A forward value became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace rgfm
