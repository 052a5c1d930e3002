#pragma once

#include <stdexcept>
#include <string>

namespace npvae {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Kernel weights need at least two points per batch.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient turned NaN/Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Bad arguments or an operation the model kind does not support.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (open, read, write).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. Subclasses distinguish the failure mode.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DimensionOverflowError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnknownSectionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeInconsistencyError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace npvae
