#pragma once

#include <stdexcept>
#include <string>

namespace gcm {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Mismatched or unusable array dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Image too small for the requested operation.
class SizeError : public Error {
public:
    using Error::Error;
};

/// Invalid scalar parameter (nonpositive step size, weight out of range, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Operation applied to an image in the wrong domain (pixel vs gradient).
class DomainTagError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Input carries no usable signal (e.g. zero gradients for kernel estimation).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent file contents.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Mask does not satisfy its contract (e.g. no observed pixels).
class MaskError : public Error {
public:
    using Error::Error;
};

/// An internal guarantee was violated; indicates a bug, never swallowed.
class InvariantError : public Error {
public:
    using Error::Error;
};

}  // namespace gcm
