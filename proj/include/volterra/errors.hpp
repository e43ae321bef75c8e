#pragma once

#include <stdexcept>
#include <string>

namespace volterra {

// Bad inputs: malformed files, inconsistent lengths, out-of-range arguments.
// The CLI maps this to exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown: non-finite cost or gradient, undefined scales.
// The CLI maps this to exit code 3.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace volterra
