#pragma once

#include <stdexcept>
#include <string>

namespace peridot {

/// Argument outside the operation's domain (e.g. l >= q, u >= q).
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (e.g. a non-cyclic member in a set file).
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Operation called on an object in the wrong state.
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Search completed without a result (e.g. no prime in range).
struct NotFoundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The identification engine exceeded its configured path capacity.
struct BackpressureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace peridot
