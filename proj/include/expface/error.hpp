#pragma once

#include <stdexcept>
#include <string>

namespace expface {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A LossSpec, ToySpec or RunConfig violates its invariants.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An input lies outside the mathematical domain of an operation
/// (angle outside [0, pi], zero-norm vector, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Derivative requested at a SphereFace breakpoint k*pi/m.
class NonDifferentiableError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Caller broke a documented precondition (unsorted samples, short grids).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Reading or writing an artifact failed.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingError : public Error {
public:
    TrainingError(int epoch, const std::string& what)
        : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what),
          epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace expface
