#pragma once

#include <stdexcept>
#include <string>

namespace stpca {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Mixing unit-norm and sqrt(N)-norm frames.
class ConventionError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, broken manifold invariants and similar.
class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A closed-form or integrated quantity diverges at `blowup_time`.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, double blowup_time)
      : Error(what), blowup_time_(blowup_time) {}
  double blowup_time() const { return blowup_time_; }

 private:
  double blowup_time_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace stpca
