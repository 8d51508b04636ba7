#include "errors.hpp"

namespace iace {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::io: return "io";
        case ErrorCode::parse: return "parse";
        case ErrorCode::integrity: return "integrity";
        case ErrorCode::internal: return "internal";
    }
    return "unknown";
}

}  // namespace iace
