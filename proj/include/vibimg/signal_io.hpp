#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vibimg/error.hpp"
#include "vibimg/mat5.hpp"
#include "vibimg/types.hpp"

namespace vibimg {

inline constexpr std::string_view kDriveEndSuffix = "_DE_time";
inline constexpr std::string_view kFanEndSuffix = "_FE_time";

/// Returns the one variable whose name ends with `suffix`, flattened in
/// storage (column-major) order. Throws ChannelMissing / ChannelAmbiguous.
std::vector<double> select_channel(const std::map<std::string, MatArray>& vars,
                                   std::string_view suffix = kDriveEndSuffix);

enum class SampleFormat { Mat5, Csv, F64le };

std::string_view to_string(SampleFormat format);
std::optional<SampleFormat> parse_sample_format(std::string_view name);

/// One sample per line. A first line that does not parse as a number is
/// treated as a header; blank lines are ignored.
std::vector<double> read_csv_samples(const std::filesystem::path& path);
void write_csv_samples(const std::filesystem::path& path, std::span<const double> samples);

/// Raw little-endian IEEE-754 binary64, no header.
std::vector<double> read_f64le_samples(const std::filesystem::path& path);
void write_f64le_samples(const std::filesystem::path& path, std::span<const double> samples);

struct ManifestEntry {
    RecordingMeta meta;  // meta.source_path holds the path as written in the manifest
    SampleFormat format = SampleFormat::F64le;
    /// Variable-name suffix for MAT entries; empty selects by sensor.
    std::string channel;
};

/// Loads one entry's samples, resolving relative paths against `base_dir`.
RawRecording load_entry(const ManifestEntry& entry, const std::filesystem::path& base_dir);

/// Per-entry failures collected while loading a manifest.
class CatalogError : public Error {
public:
    CatalogError(ErrorCode code, std::vector<std::pair<std::string, std::string>> failures);

    const std::vector<std::pair<std::string, std::string>>& failures() const { return failures_; }

private:
    std::vector<std::pair<std::string, std::string>> failures_;
};

/// Parses and validates a manifest without loading any samples.
std::vector<ManifestEntry> parse_manifest(const std::string& json_text, int* version = nullptr);

/// Loads every manifest entry in manifest order. Malformed JSON or schema
/// problems throw ManifestParse; per-entry problems (missing files, invariant
/// violations, bad channels) are all gathered into one CatalogError.
DatasetCatalog load_catalog(const std::filesystem::path& manifest);

void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries,
                    int version = 1);

} // namespace vibimg
