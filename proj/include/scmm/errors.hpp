#pragma once

#include <stdexcept>
#include <string>

namespace scmm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain of a function (log of nonpositive, zero variance, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API contract (non-scalar loss, empty batch, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid or infeasible configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Channel name missing under a drop_extra alignment.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Every pairwise distance in a batch is equal, so min-max normalization is undefined.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given labels (e.g. only one class in the truth).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Training could not continue (non-finite gradient, too many skipped batches).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace scmm
