#pragma once

#include <stdexcept>
#include <string>

namespace cslc {

// Raised for malformed or inconsistent user data (files, shapes, ranges).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a numerical procedure cannot proceed (singular solve,
// acceptance collapse, non-decaying autocorrelation).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace cslc
