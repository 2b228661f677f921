#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace langkit {

// Runtime error carrying a stable machine-readable code ("empty-shingle-set",
// "retries-exhausted", ...) next to the human-readable message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& detail)
        : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

    explicit Error(std::string code)
        : std::runtime_error(code), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Configuration / manifest validation failure. Maps to exit code 2 in the CLI.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace langkit
