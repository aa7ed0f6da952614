#pragma once

#include <stdexcept>
#include <string>

namespace factground {

// Error taxonomy mirrors the CLI exit-code contract:
//   usage (2), schema/data (3), numerical (4).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace factground
