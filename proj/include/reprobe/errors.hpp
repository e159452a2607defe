#pragma once

#include <stdexcept>
#include <string>

namespace reprobe {

// Error families map onto the CLI exit codes: ConfigError -> 2,
// AdapterError -> 3, DataError -> 4. Everything else is a plain
// std::invalid_argument / std::runtime_error from precondition checks.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct AdapterError : std::runtime_error {
    explicit AdapterError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace reprobe
