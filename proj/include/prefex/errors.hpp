#pragma once

#include <stdexcept>
#include <string>

namespace prefex {

// Invalid sizes, out-of-range indices, bad hyperparameters.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Vector/matrix dimension mismatch.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Violated operation precondition (empty buffer, N < 2, probability outside [0,1]).
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Non-finite values reached a place that cannot absorb them.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace prefex
