#pragma once

#include <stdexcept>
#include <string>

namespace sere {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed container or file (bad header, truncated payload).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Well-formed container holding something we do not handle.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// Content violates a data invariant (non-finite values, bad labels,
/// inconsistent sizes, missing classes).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Tensor dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Operation precondition violated (empty input, short frame, index out
/// of range, impossible stratification).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& msg, int epoch) : Error(msg), epoch(epoch) {}
    int epoch;
};

}  // namespace sere
