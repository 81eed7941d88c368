#pragma once

#include <stdexcept>
#include <string>

namespace brandrank {

// Base for everything thrown by this library. The CLI maps these to exit
// code 2; anything escaping CLI11 argument parsing is exit code 1.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input data: malformed files, unknown ids, schema violations.
struct data_error : error {
    explicit data_error(const std::string& msg) : error(msg) {}
};

// A caller broke an API precondition (shape mismatch, stale cache, ...).
struct contract_error : error {
    explicit contract_error(const std::string& msg) : error(msg) {}
};

// Numeric domain violation: NaN/Inf where finite values are required.
struct numeric_error : error {
    explicit numeric_error(const std::string& msg) : error(msg) {}
};

} // namespace brandrank
