#pragma once

#include <stdexcept>
#include <string>

namespace shapednet {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes do not line up (wrong rank, mismatched channels, ...).
struct DimensionError : Error {
    using Error::Error;
};

// A numeric parameter is outside its valid range (eps <= 0, bad alpha, ...).
struct ParameterError : Error {
    using Error::Error;
};

// Input data violates a documented invariant (bfp out of range, b <= 0, ...).
struct DataError : Error {
    using Error::Error;
};

// Malformed manifest / config text.
struct ParseError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

struct EvalError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace shapednet
