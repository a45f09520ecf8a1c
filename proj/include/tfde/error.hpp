#pragma once

#include <stdexcept>
#include <string>

namespace tfde {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied an out-of-range or inconsistent parameter.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain where a function is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Numerical failure; the subclasses say which kind.
class NumericalError : public Error {
public:
    using Error::Error;
};

class ConstructionFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class BreakdownError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ToleranceNotMet : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// History advanced out of sequence.
class LevelOrderError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what)
{
    if (!ok) {
        throw InvalidParameter(what);
    }
}

} // namespace detail
} // namespace tfde
