#pragma once

#include <stdexcept>
#include <string>

namespace clickcube {

// Invalid arguments are reported with std::invalid_argument.

/// Raised when combining values whose shapes disagree (e.g. bootstrap
/// columns of different length reaching the same reducer).
class invalid_state_error : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Raised when an estimator has nothing to work with, e.g. every bootstrap
/// replicate of a cell has zero weight.
class insufficient_data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when the injected noise has no variance, so feedback cannot be
/// separated from the rest of the predictor.
class unidentifiable_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace clickcube
