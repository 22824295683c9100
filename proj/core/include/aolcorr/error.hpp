#pragma once

#include <stdexcept>
#include <string>

namespace aolcorr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or invariant violation on caller-supplied data.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents; carries the offending line when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

/// Numerical breakdown: step-size underflow, non-PD matrices, NaN losses.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Propagation hit the altitude floor.
class DecayError : public Error {
 public:
  DecayError(double epoch, double altitude_km)
      : Error("orbit decayed below altitude floor at epoch " + std::to_string(epoch) + " s (altitude " +
              std::to_string(altitude_km) + " km)"),
        epoch_(epoch),
        altitude_km_(altitude_km) {}
  double epoch() const noexcept { return epoch_; }
  double altitude_km() const noexcept { return altitude_km_; }

 private:
  double epoch_;
  double altitude_km_;
};

}  // namespace aolcorr
