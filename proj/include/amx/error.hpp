#pragma once

#include <stdexcept>
#include <string>

namespace amx {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes. Messages always name both shapes.
struct ShapeError : Error {
  using Error::Error;
};

/// Invalid argument or configuration value.
struct ValueError : Error {
  using Error::Error;
};

/// File or serialization problem (missing file, bad container, ...).
struct IoError : Error {
  using Error::Error;
};

/// IDX parsing failure with a distinct kind per failure mode.
struct IdxError : IoError {
  enum class Kind { bad_magic, truncated, dim_overflow };
  IdxError(Kind k, const std::string& msg) : IoError(msg), kind(k) {}
  Kind kind;
};

/// A proportional-distance denominator was exactly zero. Callers must
/// pre-filter such pairs; hitting this means the guard was bypassed.
struct GuardError : Error {
  using Error::Error;
};

/// Training produced a non-finite loss. Carries the abort diagnostics.
struct NumericAbort : Error {
  NumericAbort(const std::string& msg, int epoch_, int batch_, double penalty_,
               double skipped_ratio_)
      : Error(msg),
        epoch(epoch_),
        batch(batch_),
        penalty(penalty_),
        skipped_ratio(skipped_ratio_) {}
  int epoch = -1;
  int batch = -1;
  double penalty = 0.0;
  double skipped_ratio = 0.0;
};

}  // namespace amx
