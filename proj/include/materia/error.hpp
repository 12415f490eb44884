#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace materia {

enum class ErrorCode {
    // corpus
    IoError,
    EncodingError,
    EmptyDocument,
    // prompts
    MissingPlaceholder,
    UnsubstitutedPlaceholder,
    TemplateInvalid,
    // gateway
    AuthError,
    RateLimitExhausted,
    ProviderError,
    TransportError,
    InvalidRequest,
    // extraction
    FormatError,
    ExtractionFailed,
    JobFailed,
    // dataset
    NotReviewed,
    SchemaError,
    DatasetInvalid,
    // review
    StorageError,
    InvalidState,
    UnknownQaId,
    InvalidEdit,
    TooFewAnswers,
    UnknownSession,
    SessionNotOpen,
    SessionNotFinalized,
    EmptyAnswer,
    // eval
    DimensionMismatch,
    ZeroVector,
    MissingAnswer,
    // cli / config
    ConfigError,
    UsageError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// True for codes caused by bad input (exit code 1 in the CLI) rather than a
/// runtime failure.
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace materia
