// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace emubound {

// Failure class determines the CLI exit code: precondition failures exit 2,
// numerical failures exit 3.
enum class ErrorKind { Precondition, Numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct NoOverlap : Error {
    explicit NoOverlap(const std::string& axis)
        : Error(ErrorKind::Precondition, "grids have no overlap on axis '" + axis + "'"), axis(axis) {}
    std::string axis;
};

struct UnknownPoint : Error {
    explicit UnknownPoint(const std::string& what) : Error(ErrorKind::Precondition, what) {}
};

struct RangeViolation : Error {
    RangeViolation(const std::string& name, double value)
        : Error(ErrorKind::Precondition,
                "parameter '" + name + "' value " + std::to_string(value) + " outside its range"),
          name(name),
          value(value) {}
    std::string name;
    double value;
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& what) : Error(ErrorKind::Precondition, what) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error(ErrorKind::Precondition, what) {}
};

struct NotPositiveDefinite : Error {
    explicit NotPositiveDefinite(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

struct FitError : Error {
    explicit FitError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

struct OptError : Error {
    explicit OptError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

struct EstimationError : Error {
    explicit EstimationError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

struct StageDependencyError : Error {
    explicit StageDependencyError(const std::string& artifact)
        : Error(ErrorKind::Precondition, "missing upstream artifact: " + artifact), artifact(artifact) {}
    std::string artifact;
};

struct ConfigMismatch : Error {
    explicit ConfigMismatch(const std::string& what) : Error(ErrorKind::Precondition, what) {}
};

}  // namespace emubound
