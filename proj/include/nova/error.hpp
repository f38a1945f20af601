#pragma once

#include <stdexcept>
#include <string>

namespace nova {

// Invalid arguments use std::invalid_argument directly. The types below carry
// the failure classes that the command-line tool maps onto exit codes.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Missing manifest column.
struct SchemaError : DataError {
    using DataError::DataError;
};

/// Bad label value; the message cites the row.
struct ValueError : DataError {
    using DataError::DataError;
};

/// Manifest references images that do not exist.
struct ValidationError : DataError {
    using DataError::DataError;
};

struct CorruptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UndefinedMetricError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Raised when a training step produces a non-finite loss.
struct NumericalError : std::runtime_error {
    NumericalError(long step, std::string term, const std::string& what)
        : std::runtime_error(what), step(step), term(std::move(term)) {}
    long step;
    std::string term;
};

}  // namespace nova
