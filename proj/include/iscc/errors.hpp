#ifndef ISCC_ERRORS_HPP
#define ISCC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace iscc {

/// Scenario geometry that cannot produce a channel (e.g. zero BS-receiver distance).
class InvalidGeometryError : public std::runtime_error {
public:
  explicit InvalidGeometryError(const std::string& what) : std::runtime_error(what) {}
};

/// Fisher information degenerate for the requested angle estimate.
class SingularFisherError : public std::runtime_error {
public:
  explicit SingularFisherError(const std::string& what) : std::runtime_error(what) {}
};

/// Transmit covariance (numerically) singular where an inverse is required.
class SingularCovarianceError : public std::runtime_error {
public:
  explicit SingularCovarianceError(const std::string& what) : std::runtime_error(what) {}
};

/// Rank-one reconstruction produced a solution that violates a constraint.
class ConstructionViolationError : public std::runtime_error {
public:
  explicit ConstructionViolationError(const std::string& what) : std::runtime_error(what) {}
};

/// Transmitted signal matrix with (numerically) singular S S^H where the
/// least-squares response estimate needs its inverse.
class RankDeficientSignalError : public std::runtime_error {
public:
  explicit RankDeficientSignalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iscc

#endif  // ISCC_ERRORS_HPP
