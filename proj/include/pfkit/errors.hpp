// Typed error taxonomy.  Every failure a caller is expected to handle is an
// exception deriving from pfkit::Error; the concrete type is the contract.
#pragma once

#include <stdexcept>
#include <string>

namespace pfkit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- spectral / field-level ------------------------------------------------

// Inverse transform input whose imaginary residue exceeds tolerance.
struct NonHermitianInput : Error {
  using Error::Error;
};

// H^-1 inner product requested on data with non-negligible mean.
struct NonZeroMean : Error {
  using Error::Error;
};

// --- model-level -------------------------------------------------------------

// Convective model evaluated without an advection field.
struct MissingAdvection : Error {
  using Error::Error;
};

// Operation applied to a model kind it is not defined for.
struct WrongKind : Error {
  using Error::Error;
};

// --- solver-level ------------------------------------------------------------

struct NewtonDiverged : Error {
  NewtonDiverged(const std::string& what, double residual_, int iters_)
      : Error(what), residual(residual_), iters(iters_) {}
  double residual;
  int iters;
};

struct LinearSolveDiverged : Error {
  using Error::Error;
};

struct IterationStalled : Error {
  using Error::Error;
};

// Non-finite value detected in the evolved field.
struct Diverged : Error {
  Diverged(const std::string& what, long step_) : Error(what), step(step_) {}
  long step;
};

// --- geometry ----------------------------------------------------------------

// Empty contour / point set handed to an operation that needs points.
struct EmptyInput : Error {
  using Error::Error;
};

// No sign change anywhere in the field (informational).
struct EmptyContour : Error {
  using Error::Error;
};

// Shape does not fit in the periodic cell with the required interface
// clearance (warning-level: profile construction still proceeds).
struct ClearanceViolation : Error {
  ClearanceViolation(const std::string& what, double clearance_)
      : Error(what), clearance(clearance_) {}
  double clearance;
};

// --- configuration / IO --------------------------------------------------------

struct ConfigError : Error {
  using Error::Error;
};

struct FileNotFound : ConfigError {
  using ConfigError::ConfigError;
};

struct ParseError : ConfigError {
  ParseError(const std::string& what, int line_) : ConfigError(what), line(line_) {}
  int line;
};

struct ValidationError : ConfigError {
  ValidationError(const std::string& key_, const std::string& reason_)
      : ConfigError(key_ + ": " + reason_), key(key_), reason(reason_) {}
  std::string key;
  std::string reason;
};

struct UnknownKey : ConfigError {
  explicit UnknownKey(const std::string& key_) : ConfigError("unknown key: " + key_), key(key_) {}
  std::string key;
};

}  // namespace pfkit
