#include "vibimg/error.hpp"

namespace vibimg {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedElement: return "TruncatedElement";
    case ErrorCode::DecompressFailure: return "DecompressFailure";
    case ErrorCode::ChannelMissing: return "ChannelMissing";
    case ErrorCode::ChannelAmbiguous: return "ChannelAmbiguous";
    case ErrorCode::ManifestParse: return "ManifestParse";
    case ErrorCode::InvalidRecording: return "InvalidRecording";
    case ErrorCode::Io: return "Io";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::RangeViolation: return "RangeViolation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::NumericalInstability: return "NumericalInstability";
    case ErrorCode::DatasetTooSmall: return "DatasetTooSmall";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

bool is_validation_error(ErrorCode code) {
    switch (code) {
    case ErrorCode::Io:
    case ErrorCode::DecompressFailure:
    case ErrorCode::TruncatedElement:
    case ErrorCode::Truncated:
    case ErrorCode::NumericalInstability:
        return false;
    default:
        return true;
    }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

} // namespace vibimg
