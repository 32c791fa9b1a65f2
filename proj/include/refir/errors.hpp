#pragma once

#include <stdexcept>
#include <string>

namespace refir {

// Error categories. Map onto CLI exit codes: usage/config -> 1,
// data/file problems -> 2, everything else -> 3.
enum class ErrorCode {
    Usage,
    Config,
    Io,
    BadMagic,
    VersionMismatch,
    Truncated,
    Format,
    Dimension,
    Normalization,
    NotFound,
    Internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

    int exit_code() const {
        switch (code_) {
        case ErrorCode::Usage:
        case ErrorCode::Config:
            return 1;
        case ErrorCode::Io:
        case ErrorCode::BadMagic:
        case ErrorCode::VersionMismatch:
        case ErrorCode::Truncated:
        case ErrorCode::Format:
        case ErrorCode::NotFound:
            return 2;
        default:
            return 3;
        }
    }

private:
    ErrorCode code_;
};

} // namespace refir
