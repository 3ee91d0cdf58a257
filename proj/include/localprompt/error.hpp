#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lp {

enum class ErrorCode {
    ZeroNormVector,
    NonPositiveTemperature,
    EmptyInput,
    BadMagic,
    VersionMismatch,
    DimensionMismatch,
    TruncatedFile,
    NonFiniteValue,
    ChecksumMismatch,
    InvalidLabel,
    IoFailure,
    EmptyClass,
    ShapeMismatch,
    NotEnoughCandidates,
    NoNegativePrompts,
    TooFewNegativePrompts,
    StepOutOfRange,
    MissingCropSets,
    InvalidConfig,
    EmptySet,
    UnknownAxis,
    SpecInvalid,
    Usage,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI's one-line error output) can dispatch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace lp
