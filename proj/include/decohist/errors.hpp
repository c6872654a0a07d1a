#pragma once

#include <stdexcept>
#include <string>

namespace decohist {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed tensor-space layout or layout mismatch between operands.
class LayoutError : public Error {
public:
    using Error::Error;
};

/// An operator or state failed a structural validation it was required to pass.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A computation would exceed a configured size cap.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Probabilities were requested for a history set that failed its consistency check.
class InconsistentSetError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration (schema violation, bad parameter values).
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace decohist
