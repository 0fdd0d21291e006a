#pragma once

#include <stdexcept>
#include <string>

namespace gmlab {

/// Bad argument to an operation (nonpositive horizon, p < 1, ...).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A value left its admissible domain (out-of-band volatility in strict mode,
/// non-finite integrand or payoff evaluation).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Requested sizes exceed the configured memory guard.
class CapacityError : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Simple-process breakpoints do not sit on the time grid.
class GridMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Level grid does not cover the sampled path range.
class CoverageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A statistical fit or diagnostic could not be formed.
class DiagnosticError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid run configuration, detected before any simulation.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace gmlab
