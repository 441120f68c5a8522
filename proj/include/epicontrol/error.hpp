#pragma once

#include <stdexcept>
#include <string>

namespace epicontrol {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad config, malformed file, out-of-range value).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Config schema violation at a specific field path (e.g. "config.particles").
class FieldError : public ValidationError {
public:
    FieldError(std::string field, const std::string& message)
        : ValidationError(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Shapes or dimensions do not line up.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// A numerical routine failed (non-convergence, singular system).
class NumericError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

}  // namespace epicontrol
