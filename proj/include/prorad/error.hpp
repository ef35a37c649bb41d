#pragma once

#include <stdexcept>
#include <string>

namespace prorad {

enum class ErrorCode {
    InvalidArgument,
    EmptyMask,
    GridMismatch,
    // NIfTI
    BadMagic,
    UnsupportedDatatype,
    BadDimension,
    TruncatedFile,
    ObliqueOrientation,
    IoFailure,
    // case loading
    FrameMismatch,
    MissingMask,
    LabelMismatch,
    // preprocessing
    InsufficientBValues,
    // modelling
    SingleClass,
    WidthMismatch,
    TooFewPatients,
    MissingCover,
    Schema,
    EmptyLesion,
    LengthMismatch,
    Config,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one ErrorCode so callers (and tests)
/// can tell failure modes apart without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace prorad
