#pragma once

#include <stdexcept>
#include <string>

namespace atep {

inline constexpr const char* kVersion = "0.1.0";

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

/// Input violates an operation precondition (bad sizes, degenerate data, ...).
struct InvalidInput : Error {
    using Error::Error;
};

}  // namespace atep
