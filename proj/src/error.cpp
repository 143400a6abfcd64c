#include "hloblab/error.hpp"

namespace hloblab {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::RowCountMismatch: return "RowCountMismatch";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::CrossedBook: return "CrossedBook";
        case ErrorCode::NonMonotonicLevels: return "NonMonotonicLevels";
        case ErrorCode::ZeroBestVolume: return "ZeroBestVolume";
        case ErrorCode::OutsideSession: return "OutsideSession";
        case ErrorCode::EmptyAfterClean: return "EmptyAfterClean";
        case ErrorCode::MissingLevels: return "MissingLevels";
        case ErrorCode::InsufficientHistory: return "InsufficientHistory";
        case ErrorCode::LeakageViolation: return "LeakageViolation";
        case ErrorCode::SeriesTooShort: return "SeriesTooShort";
        case ErrorCode::MissingClass: return "MissingClass";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DegenerateRange: return "DegenerateRange";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyList: return "EmptyList";
        case ErrorCode::TooFewVertices: return "TooFewVertices";
        case ErrorCode::AsymmetricInput: return "AsymmetricInput";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::BadLabel: return "BadLabel";
        case ErrorCode::ConfigInconsistent: return "ConfigInconsistent";
        case ErrorCode::NonFiniteLogit: return "NonFiniteLogit";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::DigestMismatch: return "DigestMismatch";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::UnknownCommand: return "UnknownCommand";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

}  // namespace hloblab
