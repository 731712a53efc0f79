#pragma once

#include <stdexcept>
#include <string>

namespace invdp {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Iterative method did not reach its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}
    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

/// Singular or ill-conditioned linear system / information matrix.
class SingularError : public Error {
public:
    using Error::Error;
};

/// Not enough usable observations (or no variation) to estimate.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// A simulation spec that cannot be realised.
class SpecError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration (CLI exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace invdp
