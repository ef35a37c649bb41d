#include "prorad/error.hpp"

namespace prorad {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::EmptyMask: return "empty-mask";
        case ErrorCode::GridMismatch: return "grid-mismatch";
        case ErrorCode::BadMagic: return "bad-magic";
        case ErrorCode::UnsupportedDatatype: return "unsupported-datatype";
        case ErrorCode::BadDimension: return "bad-dimension";
        case ErrorCode::TruncatedFile: return "truncated-file";
        case ErrorCode::ObliqueOrientation: return "oblique-orientation";
        case ErrorCode::IoFailure: return "io-failure";
        case ErrorCode::FrameMismatch: return "frame-mismatch";
        case ErrorCode::MissingMask: return "missing-mask";
        case ErrorCode::LabelMismatch: return "label-mismatch";
        case ErrorCode::InsufficientBValues: return "insufficient-b-values";
        case ErrorCode::SingleClass: return "single-class";
        case ErrorCode::WidthMismatch: return "width-mismatch";
        case ErrorCode::TooFewPatients: return "too-few-patients";
        case ErrorCode::MissingCover: return "missing-cover";
        case ErrorCode::Schema: return "schema";
        case ErrorCode::EmptyLesion: return "empty-lesion";
        case ErrorCode::LengthMismatch: return "length-mismatch";
        case ErrorCode::Config: return "config";
    }
    return "unknown";
}

}  // namespace prorad
