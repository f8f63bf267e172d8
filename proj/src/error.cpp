#include "uiclab/error.hpp"

namespace uiclab {

const char* error_code_name(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::format: return "format error";
    case ErrorCode::config: return "config error";
    case ErrorCode::shape: return "shape error";
    case ErrorCode::contract_violation: return "contract violation";
    case ErrorCode::numeric: return "numeric error";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::internal: return "internal error";
    }
    return "unknown error";
}

} // namespace uiclab
