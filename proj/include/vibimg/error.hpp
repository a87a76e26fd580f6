#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vibimg {

/// Named failure kinds. The name is part of every error message so that
/// command-line users and tests can match on it.
enum class ErrorCode {
    // signal-io
    BadMagic,
    UnsupportedVersion,
    TruncatedElement,
    DecompressFailure,
    ChannelMissing,
    ChannelAmbiguous,
    ManifestParse,
    InvalidRecording,
    Io,
    // preprocess
    NonFiniteInput,
    SignalTooShort,
    LengthMismatch,
    RangeViolation,
    InvalidArgument,
    // synthgen
    InvalidRate,
    // nn-core
    ShapeMismatch,
    OddDimension,
    LabelOutOfRange,
    VersionMismatch,
    ArchitectureMismatch,
    Truncated,
    NumericalInstability,
    // experiment
    DatasetTooSmall,
    // cli
    InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// True for errors caused by bad user input (as opposed to I/O or runtime
/// faults); the CLI maps these to exit code 1.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace vibimg
