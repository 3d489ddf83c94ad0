#pragma once

#include <stdexcept>
#include <string>

namespace moc2d {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Point lies outside the closure of the domain.
class DomainMembershipError : public Error {
public:
    using Error::Error;
};

/// Evaluation requested inside the stop-set collar where the transformed
/// gradient is not trusted.
class StopSetProximityError : public Error {
public:
    using Error::Error;
};

/// A time function failed one of its structural checks.
class TimeFunctionInvalidError : public Error {
public:
    using Error::Error;
};

/// The transport field runs against (or tangent to) the time level sets.
class CausalityViolationError : public Error {
public:
    using Error::Error;
};

/// Characteristic tracing failed (drift, step budget, left the domain).
class IntegrationFailureError : public Error {
public:
    using Error::Error;
};

/// Geometric query got inconsistent inputs (point off the boundary, ...).
class GeometryInconsistencyError : public Error {
public:
    using Error::Error;
};

/// Nonpositive characteristic Jacobian; signals crossing characteristics.
class CharacteristicCrossingError : public Error {
public:
    using Error::Error;
};

/// A stripe failed to contract within the iteration budget.
class ContractionFailureError : public Error {
public:
    using Error::Error;
};

/// A pairwise estimator was fed two identical fields.
class DegeneratePairError : public Error {
public:
    using Error::Error;
};

/// Nonpositive input to a bound formula.
class InvalidBoundsError : public Error {
public:
    using Error::Error;
};

/// Inpainting mask violates its structural requirements.
class MaskInvalidError : public Error {
public:
    using Error::Error;
};

/// Malformed file or unreadable path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Bad run configuration (CLI / JSON).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace moc2d
