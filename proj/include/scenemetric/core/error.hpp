#pragma once

#include <stdexcept>
#include <string>

namespace scenemetric {

/// Base class for every error raised by the library. Messages start with a
/// short stable phrase (e.g. "trajectory too short") followed by details.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition)
        throw Error(message);
}

} // namespace scenemetric
