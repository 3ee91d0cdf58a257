#include "localprompt/error.hpp"

namespace lp {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::ZeroNormVector: return "ZeroNormVector";
        case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorCode::InvalidLabel: return "InvalidLabel";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NotEnoughCandidates: return "NotEnoughCandidates";
        case ErrorCode::NoNegativePrompts: return "NoNegativePrompts";
        case ErrorCode::TooFewNegativePrompts: return "TooFewNegativePrompts";
        case ErrorCode::StepOutOfRange: return "StepOutOfRange";
        case ErrorCode::MissingCropSets: return "MissingCropSets";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::EmptySet: return "EmptySet";
        case ErrorCode::UnknownAxis: return "UnknownAxis";
        case ErrorCode::SpecInvalid: return "SpecInvalid";
        case ErrorCode::Usage: return "Usage";
    }
    return "Unknown";
}

}  // namespace lp
