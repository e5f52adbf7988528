#pragma once

#include <stdexcept>
#include <string>

namespace ldc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class OptimError : public Error {
public:
    using Error::Error;
};

/// Raised by masked losses and metrics when the mask selects nothing.
class NoValidPixels : public DomainError {
public:
    using DomainError::DomainError;
};

}  // namespace ldc
