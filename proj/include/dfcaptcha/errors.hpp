#pragma once

#include <stdexcept>
#include <string>

namespace dfcaptcha {

// Every failure the library reports carries one of these codes so that
// callers (and the CLI exit-code mapping) can dispatch without string
// matching.
enum class ErrorCode {
    DuplicateId,
    InvariantViolation,
    StreamTooShort,
    DimensionMismatch,
    NoActivity,
    IllegalTransition,
    BudgetExhausted,
    MalformedMessage,
    EmptyCorpus,
    DegenerateDimension,
    NoEligibleChallenge,
    ConfigInvalid,
    ParseError,
    IoError,
};

inline const char* to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::DuplicateId: return "duplicate_id";
        case ErrorCode::InvariantViolation: return "invariant_violation";
        case ErrorCode::StreamTooShort: return "stream_too_short";
        case ErrorCode::DimensionMismatch: return "dimension_mismatch";
        case ErrorCode::NoActivity: return "no_activity";
        case ErrorCode::IllegalTransition: return "illegal_transition";
        case ErrorCode::BudgetExhausted: return "budget_exhausted";
        case ErrorCode::MalformedMessage: return "malformed_message";
        case ErrorCode::EmptyCorpus: return "empty_corpus";
        case ErrorCode::DegenerateDimension: return "degenerate_dimension";
        case ErrorCode::NoEligibleChallenge: return "no_eligible_challenge";
        case ErrorCode::ConfigInvalid: return "config_invalid";
        case ErrorCode::ParseError: return "parse_error";
        case ErrorCode::IoError: return "io_error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace dfcaptcha
