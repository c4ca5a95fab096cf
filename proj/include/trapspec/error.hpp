#pragma once

#include <stdexcept>
#include <string>

namespace trapspec {

/// Base for every error raised by the library. `exit_code()` is the CLI exit
/// status the error maps to (2 usage/config, 3 numerical, 4 no fit).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 3; }
    virtual const char* kind() const noexcept { return "error"; }
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "domain"; }
};

/// Evaluation too close to a pole (tangent asymptote or resonance).
class PoleError : public DomainError {
public:
    using DomainError::DomainError;
    const char* kind() const noexcept override { return "pole"; }
};

/// Malformed or inconsistent input (configs, measurements, indices).
class InputError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
    const char* kind() const noexcept override { return "input"; }
};

/// A numerical procedure did not produce the requested result.
class SolverError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "solver"; }
};

/// Inversion found no admissible reference energy.
class NoFitError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
    const char* kind() const noexcept override { return "no_fit"; }
};

} // namespace trapspec
