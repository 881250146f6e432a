#pragma once

#include <stdexcept>
#include <string>

namespace selfsense {

// Base for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad inputs: shapes, configs, labels, missing or malformed files.
// The CLI maps this family to exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DataError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Numeric failures at runtime (divergence, non-finite values).
// The CLI maps this family to exit code 2.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace selfsense
