#pragma once

#include <stdexcept>
#include <string>

namespace ulre {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// Tensor shapes that do not agree with each other or with a model.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Unreadable, truncated, or malformed input data (files, label values).
class DataError : public Error {
public:
    using Error::Error;
};

// Training or inference produced a non-finite quantity.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Invalid experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace ulre
