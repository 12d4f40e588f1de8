#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace advlab {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structural problems: mismatched shapes, malformed graphs.
struct ShapeError : Error {
    using Error::Error;
};

// Violated preconditions (bad arguments, wrong call order).
struct ContractError : Error {
    using Error::Error;
};

// NaN/Inf produced during evaluation. Carries the index of the
// operation that produced it.
struct NumericError : Error {
    int64_t op_index = -1;
    NumericError(const std::string& msg, int64_t index)
        : Error(msg), op_index(index) {}
};

// Invalid configuration (files, CLI flags, model specs).
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem / format problems, message carries path context.
struct IoError : Error {
    using Error::Error;
};

}  // namespace advlab
