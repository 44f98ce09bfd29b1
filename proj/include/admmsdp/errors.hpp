#pragma once

#include <stdexcept>
#include <string>

namespace admmsdp {

/// Precondition on the mathematical input was violated (definiteness, rank, gap).
class DomainError : public std::invalid_argument {
 public:
  explicit DomainError(const std::string& what) : std::invalid_argument(what) {}
};

/// Operand sizes disagree.
class DimensionMismatch : public std::invalid_argument {
 public:
  explicit DimensionMismatch(const std::string& what)
      : std::invalid_argument(what) {}
};

/// An iterative kernel failed to converge or produced non-finite values.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what)
      : std::runtime_error(what) {}
};

/// Malformed input file.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Well-formed input that uses a feature outside the supported subset.
class UnsupportedFormat : public FormatError {
 public:
  explicit UnsupportedFormat(const std::string& what) : FormatError(what) {}
};

/// Problem data violates a structural assumption (e.g. dependent constraints).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace admmsdp
