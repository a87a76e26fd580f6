#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vibimg {

/// Fault location, doubling as the class index (Baseline=0 ... OuterRace=3).
enum class FaultLocation : std::uint8_t { Baseline = 0, Ball = 1, InnerRace = 2, OuterRace = 3 };

inline constexpr std::size_t kNumLocations = 4;
inline constexpr std::array<FaultLocation, kNumLocations> kAllLocations = {
    FaultLocation::Baseline, FaultLocation::Ball, FaultLocation::InnerRace, FaultLocation::OuterRace};

constexpr std::size_t class_index(FaultLocation loc) { return static_cast<std::size_t>(loc); }
FaultLocation location_from_index(std::size_t index);

std::string_view to_string(FaultLocation loc);
std::optional<FaultLocation> parse_location(std::string_view name);

enum class Sensor : std::uint8_t { DriveEnd, FanEnd };

std::string_view to_string(Sensor sensor);
std::optional<Sensor> parse_sensor(std::string_view name);

struct RecordingMeta {
    std::string id;
    FaultLocation location = FaultLocation::Baseline;
    int fault_size_mils = 0;
    int load_hp = 0;
    double sampling_rate_hz = 48000.0;
    Sensor sensor = Sensor::DriveEnd;
    std::string source_path;
};

/// Throws InvalidRecording naming the violated invariant.
void validate(const RecordingMeta& meta);

struct RawRecording {
    RecordingMeta meta;
    std::vector<double> samples;
};

/// Checks the metadata invariants plus non-empty, finite samples.
void validate(const RawRecording& recording);

struct DatasetCatalog {
    std::vector<RawRecording> recordings;
    int manifest_version = 1;
};

} // namespace vibimg
