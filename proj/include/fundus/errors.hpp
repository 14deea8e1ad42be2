#pragma once

#include <stdexcept>
#include <string>

namespace fundus {

// Precondition violations on arguments are reported as std::invalid_argument.

/// Malformed or inconsistent input files: manifests, masks, weight files.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoDiscFound : public std::runtime_error {
public:
    NoDiscFound() : std::runtime_error("no disc found") {}
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fundus
