#pragma once

#include <stdexcept>
#include <string>

namespace envelope {

// Bad input: dimensions, ranges, missing files. Maps to CLI exit code 1.
class InvalidArgument : public std::invalid_argument
{
public:
    explicit InvalidArgument(const std::string& what)
        : std::invalid_argument(what) {}
};

// Numerical breakdown: loss of definiteness, failed factorization.
// Maps to CLI exit code 2.
class NumericalError : public std::runtime_error
{
public:
    explicit NumericalError(const std::string& what)
        : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg)
{
    if (!cond) throw InvalidArgument(msg);
}

} // namespace detail
} // namespace envelope
