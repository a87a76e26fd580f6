#include "vibimg/types.hpp"

#include <cmath>

#include "vibimg/error.hpp"

namespace vibimg {

FaultLocation location_from_index(std::size_t index) {
    if (index >= kNumLocations) {
        throw Error(ErrorCode::LabelOutOfRange, "class index " + std::to_string(index));
    }
    return kAllLocations[index];
}

std::string_view to_string(FaultLocation loc) {
    switch (loc) {
    case FaultLocation::Baseline: return "Baseline";
    case FaultLocation::Ball: return "Ball";
    case FaultLocation::InnerRace: return "InnerRace";
    case FaultLocation::OuterRace: return "OuterRace";
    }
    return "?";
}

std::optional<FaultLocation> parse_location(std::string_view name) {
    for (auto loc : kAllLocations) {
        if (to_string(loc) == name) return loc;
    }
    return std::nullopt;
}

std::string_view to_string(Sensor sensor) {
    return sensor == Sensor::DriveEnd ? "DriveEnd" : "FanEnd";
}

std::optional<Sensor> parse_sensor(std::string_view name) {
    if (name == "DriveEnd") return Sensor::DriveEnd;
    if (name == "FanEnd") return Sensor::FanEnd;
    return std::nullopt;
}

void validate(const RecordingMeta& meta) {
    const auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::InvalidRecording, "recording '" + meta.id + "': " + what);
    };
    if (meta.id.empty()) fail("empty id");
    const int size = meta.fault_size_mils;
    if (size != 0 && size != 7 && size != 14 && size != 21) {
        fail("fault_size_mils must be one of 0, 7, 14, 21 (got " + std::to_string(size) + ")");
    }
    if ((size == 0) != (meta.location == FaultLocation::Baseline)) {
        fail("fault_size_mils is 0 if and only if location is Baseline (got location " +
             std::string(to_string(meta.location)) + ", size " + std::to_string(size) + ")");
    }
    if (meta.load_hp < 0 || meta.load_hp > 3) {
        fail("load_hp must be in 0..3 (got " + std::to_string(meta.load_hp) + ")");
    }
    if (!(meta.sampling_rate_hz > 0.0) || !std::isfinite(meta.sampling_rate_hz)) {
        fail("sampling_rate_hz must be positive");
    }
}

void validate(const RawRecording& recording) {
    validate(recording.meta);
    if (recording.samples.empty()) {
        throw Error(ErrorCode::InvalidRecording, "recording '" + recording.meta.id + "': no samples");
    }
    for (std::size_t i = 0; i < recording.samples.size(); ++i) {
        if (!std::isfinite(recording.samples[i])) {
            throw Error(ErrorCode::InvalidRecording, "recording '" + recording.meta.id +
                                                         "': non-finite sample at index " + std::to_string(i));
        }
    }
}

} // namespace vibimg
