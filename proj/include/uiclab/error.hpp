#pragma once

#include <stdexcept>
#include <string>

namespace uiclab {

enum class ErrorCode {
    invalid_argument = 1,
    format,
    config,
    shape,
    contract_violation,
    numeric,
    io,
    internal,
};

const char* error_code_name(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above; the C
// API maps them onto uiclab_status values one to one.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        throw Error(code, message);
    }
}

} // namespace uiclab
