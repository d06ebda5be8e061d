#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hetstream {

// Precondition violated by the caller (out-of-range id, bad shape, ...).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration or hyperparameters.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed input data. Carries the 1-based input line when known (0 otherwise).
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Records or timestamps out of order.
class OrderingError : public SchemaError {
public:
    using SchemaError::SchemaError;
};

// Non-finite values, singular systems, counter saturation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hetstream
