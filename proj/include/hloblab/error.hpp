#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hloblab {

enum class ErrorCode {
    RowCountMismatch,
    MalformedRow,
    CrossedBook,
    NonMonotonicLevels,
    ZeroBestVolume,
    OutsideSession,
    EmptyAfterClean,
    MissingLevels,
    InsufficientHistory,
    LeakageViolation,
    SeriesTooShort,
    MissingClass,
    InvalidArgument,
    DegenerateRange,
    LengthMismatch,
    EmptyList,
    TooFewVertices,
    AsymmetricInput,
    IndexOutOfRange,
    ShapeMismatch,
    BadLabel,
    ConfigInconsistent,
    NonFiniteLogit,
    IoFailure,
    DigestMismatch,
    EmptyDataset,
    UnknownCommand,
    ConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what, std::size_t index = 0)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), index_(index) {}

    ErrorCode code() const noexcept { return code_; }
    /// Line number, row or position the error refers to (0 when not applicable).
    std::size_t index() const noexcept { return index_; }

private:
    ErrorCode code_;
    std::size_t index_;
};

/// Non-fatal finding reported alongside a result (dropped rows, skipped days, ...).
struct Diagnostic {
    ErrorCode code;
    std::size_t index = 0;
    std::string message;
};

using Diagnostics = std::vector<Diagnostic>;

inline void report(Diagnostics* sink, ErrorCode code, std::size_t index, std::string message) {
    if (sink != nullptr) {
        sink->push_back(Diagnostic{code, index, std::move(message)});
    }
}

}  // namespace hloblab
