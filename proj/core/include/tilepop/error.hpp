#pragma once

#include <stdexcept>

namespace tilepop {

/// Invalid configuration, arguments or violated preconditions (CLI exit code 2).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed, inconsistent or missing input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tilepop
