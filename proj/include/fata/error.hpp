#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fata {

enum class ErrorCode {
    // protocol
    EmptyQuery,
    MissingPlaceholder,
    InvalidTemplate,
    UnparseableOutput,
    TooManyQuestions,
    MismatchedAnswers,
    IllegalTransition,
    // gateway
    AuthError,
    RateLimited,
    Timeout,
    ProviderError,
    ReplayMiss,
    InvalidRequest,
    // corpus / experiment
    SchemaError,
    ShapeError,
    GenerationParseError,
    PreconditionViolation,
    MissingArtifact,
    // judging
    MissingArm,
    ScoreParseError,
    RangeError,
    ValidationError,
    // statistics
    NonPositiveBaseline,
    DegenerateSample,
    NonPositiveMean,
    TooFewPoints,
    WrongDimensionCount,
    ItemMismatch,
    InsufficientData,
    // io
    IoError,
    ConfigError,
    SessionNotFound,
    SessionExpired,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so that
/// callers (CLI exit status, HTTP status mapping, Python bindings) can branch on
/// the kind without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace fata
