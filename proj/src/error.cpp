#include "materia/error.hpp"

namespace materia {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::EncodingError: return "EncodingError";
        case ErrorCode::EmptyDocument: return "EmptyDocument";
        case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
        case ErrorCode::UnsubstitutedPlaceholder: return "UnsubstitutedPlaceholder";
        case ErrorCode::TemplateInvalid: return "TemplateInvalid";
        case ErrorCode::AuthError: return "AuthError";
        case ErrorCode::RateLimitExhausted: return "RateLimitExhausted";
        case ErrorCode::ProviderError: return "ProviderError";
        case ErrorCode::TransportError: return "TransportError";
        case ErrorCode::InvalidRequest: return "InvalidRequest";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::ExtractionFailed: return "ExtractionFailed";
        case ErrorCode::JobFailed: return "JobFailed";
        case ErrorCode::NotReviewed: return "NotReviewed";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::DatasetInvalid: return "DatasetInvalid";
        case ErrorCode::StorageError: return "StorageError";
        case ErrorCode::InvalidState: return "InvalidState";
        case ErrorCode::UnknownQaId: return "UnknownQaId";
        case ErrorCode::InvalidEdit: return "InvalidEdit";
        case ErrorCode::TooFewAnswers: return "TooFewAnswers";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::SessionNotOpen: return "SessionNotOpen";
        case ErrorCode::SessionNotFinalized: return "SessionNotFinalized";
        case ErrorCode::EmptyAnswer: return "EmptyAnswer";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::MissingAnswer: return "MissingAnswer";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EncodingError:
        case ErrorCode::EmptyDocument:
        case ErrorCode::MissingPlaceholder:
        case ErrorCode::UnsubstitutedPlaceholder:
        case ErrorCode::TemplateInvalid:
        case ErrorCode::InvalidRequest:
        case ErrorCode::NotReviewed:
        case ErrorCode::SchemaError:
        case ErrorCode::DatasetInvalid:
        case ErrorCode::InvalidState:
        case ErrorCode::InvalidEdit:
        case ErrorCode::TooFewAnswers:
        case ErrorCode::EmptyAnswer:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::ZeroVector:
        case ErrorCode::MissingAnswer:
        case ErrorCode::ConfigError:
        case ErrorCode::UsageError:
            return true;
        default:
            return false;
    }
}

}  // namespace materia
