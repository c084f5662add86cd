#pragma once

#include <stdexcept>
#include <string>

namespace orbitvae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violation supplied by the caller.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Evaluation inside the guard radius of a primary.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: integrator step limits, non-convergence, non-finite values,
/// rank deficiency.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated, or inconsistent file contents; also I/O failures.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Array shape does not match the expected layout.
class ShapeError : public Error {
public:
    using Error::Error;
};

}  // namespace orbitvae
