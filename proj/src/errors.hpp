#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace iace {

// Stable error taxonomy; values match the iace_status codes in the C API.
enum class ErrorCode {
    invalid_argument = 1,
    precondition = 2,
    io = 3,
    parse = 4,
    integrity = 5,
    internal = 6,
};

const char* error_code_name(ErrorCode code);

class IaceError : public std::runtime_error {
public:
    IaceError(ErrorCode code, std::string message, std::string details_json = "")
        : std::runtime_error(std::move(message)), code_(code), details_(std::move(details_json)) {}

    ErrorCode code() const { return code_; }
    // Optional machine-readable payload (JSON text), e.g. a list of missing prompt hashes.
    const std::string& details_json() const { return details_; }

private:
    ErrorCode code_;
    std::string details_;
};

[[noreturn]] inline void throw_invalid(std::string message, std::string details = "") {
    throw IaceError(ErrorCode::invalid_argument, std::move(message), std::move(details));
}

[[noreturn]] inline void throw_precondition(std::string message, std::string details = "") {
    throw IaceError(ErrorCode::precondition, std::move(message), std::move(details));
}

[[noreturn]] inline void throw_io(std::string message) {
    throw IaceError(ErrorCode::io, std::move(message));
}

[[noreturn]] inline void throw_parse(std::string message) {
    throw IaceError(ErrorCode::parse, std::move(message));
}

[[noreturn]] inline void throw_integrity(std::string message) {
    throw IaceError(ErrorCode::integrity, std::move(message));
}

}  // namespace iace
