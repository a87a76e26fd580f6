#include "vibimg/signal_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vibimg {

using nlohmann::json;

std::vector<double> select_channel(const std::map<std::string, MatArray>& vars, std::string_view suffix) {
    const MatArray* found = nullptr;
    std::string found_name;
    for (const auto& [name, arr] : vars) {
        if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            if (found) {
                throw Error(ErrorCode::ChannelAmbiguous,
                            "both '" + found_name + "' and '" + name + "' end with '" + std::string(suffix) + "'");
            }
            found = &arr;
            found_name = name;
        }
    }
    if (!found) throw Error(ErrorCode::ChannelMissing, "no variable ends with '" + std::string(suffix) + "'");
    return found->data;
}

std::string_view to_string(SampleFormat format) {
    switch (format) {
    case SampleFormat::Mat5: return "mat5";
    case SampleFormat::Csv: return "csv";
    case SampleFormat::F64le: return "f64le";
    }
    return "?";
}

std::optional<SampleFormat> parse_sample_format(std::string_view name) {
    if (name == "mat5") return SampleFormat::Mat5;
    if (name == "csv") return SampleFormat::Csv;
    if (name == "f64le") return SampleFormat::F64le;
    return std::nullopt;
}

namespace {

bool parse_double(std::string_view text, double& value) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

std::string display(const std::filesystem::path& p) { return p.string(); }

} // namespace

std::vector<double> read_csv_samples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + display(path) + "'");
    std::vector<double> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        double v;
        if (!parse_double(line, v)) {
            if (out.empty() && line_no == 1) continue;  // header
            throw Error(ErrorCode::InvalidRecording,
                        "'" + display(path) + "' line " + std::to_string(line_no) + ": not a number");
        }
        out.push_back(v);
    }
    return out;
}

void write_csv_samples(const std::filesystem::path& path, std::span<const double> samples) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + display(path) + "'");
    out << "sample\n";
    char buf[32];
    for (double v : samples) {
        // Shortest representation that round-trips.
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, ptr - buf);
        out.put('\n');
    }
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + display(path) + "'");
}

std::vector<double> read_f64le_samples(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + display(path) + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() % 8 != 0) {
        throw Error(ErrorCode::InvalidRecording,
                    "'" + display(path) + "' size " + std::to_string(raw.size()) + " is not a multiple of 8");
    }
    std::vector<double> out(raw.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(raw[i * 8 + b]);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

void write_f64le_samples(const std::filesystem::path& path, std::span<const double> samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + display(path) + "'");
    std::vector<char> raw(samples.size() * 8);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(samples[i]);
        for (int b = 0; b < 8; ++b, bits >>= 8) raw[i * 8 + b] = static_cast<char>(bits & 0xFF);
    }
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + display(path) + "'");
}

RawRecording load_entry(const ManifestEntry& entry, const std::filesystem::path& base_dir) {
    validate(entry.meta);
    std::filesystem::path path = entry.meta.source_path;
    if (path.is_relative()) path = base_dir / path;

    RawRecording rec;
    rec.meta = entry.meta;
    switch (entry.format) {
    case SampleFormat::Mat5: {
        const auto contents = read_mat5_file(path.string());
        std::string_view suffix = entry.channel;
        if (suffix.empty()) suffix = entry.meta.sensor == Sensor::DriveEnd ? kDriveEndSuffix : kFanEndSuffix;
        rec.samples = select_channel(contents.variables, suffix);
        break;
    }
    case SampleFormat::Csv: rec.samples = read_csv_samples(path); break;
    case SampleFormat::F64le: rec.samples = read_f64le_samples(path); break;
    }
    validate(rec);
    return rec;
}

CatalogError::CatalogError(ErrorCode code, std::vector<std::pair<std::string, std::string>> failures)
    : Error(code,
            [&] {
                std::string msg = std::to_string(failures.size()) + " manifest entr" +
                                  (failures.size() == 1 ? "y" : "ies") + " failed to load";
                for (const auto& [id, what] : failures) msg += "\n  [" + id + "] " + what;
                return msg;
            }()),
      failures_(std::move(failures)) {}

namespace {

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw Error(ErrorCode::ManifestParse, where + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::ManifestParse, where + ": field '" + key + "' has the wrong type");
    }
}

} // namespace

std::vector<ManifestEntry> parse_manifest(const std::string& json_text, int* version) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ManifestParse, e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::ManifestParse, "top level must be an object");
    const int v = required<int>(doc, "version", "manifest");
    if (version) *version = v;
    if (!doc.contains("entries") || !doc["entries"].is_array()) {
        throw Error(ErrorCode::ManifestParse, "manifest: 'entries' must be an array");
    }
    if (doc["entries"].empty()) throw Error(ErrorCode::ManifestParse, "manifest lists no entries");

    std::vector<ManifestEntry> entries;
    std::set<std::string> seen;
    std::size_t index = 0;
    for (const auto& e : doc["entries"]) {
        const std::string where = "entry " + std::to_string(index++);
        if (!e.is_object()) throw Error(ErrorCode::ManifestParse, where + ": not an object");
        ManifestEntry entry;
        entry.meta.id = required<std::string>(e, "id", where);
        const std::string here = where + " ('" + entry.meta.id + "')";
        if (!seen.insert(entry.meta.id).second) {
            throw Error(ErrorCode::ManifestParse, here + ": duplicate id");
        }
        entry.meta.source_path = required<std::string>(e, "path", here);
        const auto fmt = required<std::string>(e, "format", here);
        const auto parsed_fmt = parse_sample_format(fmt);
        if (!parsed_fmt) throw Error(ErrorCode::ManifestParse, here + ": unknown format '" + fmt + "'");
        entry.format = *parsed_fmt;
        const auto loc = required<std::string>(e, "location", here);
        const auto parsed_loc = parse_location(loc);
        if (!parsed_loc) throw Error(ErrorCode::ManifestParse, here + ": unknown location '" + loc + "'");
        entry.meta.location = *parsed_loc;
        entry.meta.fault_size_mils = required<int>(e, "fault_size_mils", here);
        entry.meta.load_hp = required<int>(e, "load_hp", here);
        entry.meta.sampling_rate_hz = required<double>(e, "sampling_rate_hz", here);
        const auto sensor = required<std::string>(e, "sensor", here);
        const auto parsed_sensor = parse_sensor(sensor);
        if (!parsed_sensor) throw Error(ErrorCode::ManifestParse, here + ": unknown sensor '" + sensor + "'");
        entry.meta.sensor = *parsed_sensor;
        if (e.contains("channel")) entry.channel = required<std::string>(e, "channel", here);
        entries.push_back(std::move(entry));
    }
    return entries;
}

DatasetCatalog load_catalog(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw Error(ErrorCode::Io, "cannot open manifest '" + display(manifest) + "'");
    std::stringstream buf;
    buf << in.rdbuf();

    DatasetCatalog catalog;
    const auto entries = parse_manifest(buf.str(), &catalog.manifest_version);
    const auto base_dir = manifest.parent_path();

    std::vector<std::pair<std::string, std::string>> failures;
    bool all_validation = true;
    for (const auto& entry : entries) {
        try {
            catalog.recordings.push_back(load_entry(entry, base_dir));
        } catch (const Error& e) {
            failures.emplace_back(entry.meta.id, e.what());
            all_validation = all_validation && is_validation_error(e.code());
        }
    }
    if (!failures.empty()) {
        throw CatalogError(all_validation ? ErrorCode::InvalidRecording : ErrorCode::Io, std::move(failures));
    }
    return catalog;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries, int version) {
    json doc;
    doc["version"] = version;
    doc["entries"] = json::array();
    for (const auto& e : entries) {
        json j;
        j["id"] = e.meta.id;
        j["path"] = e.meta.source_path;
        j["format"] = std::string(to_string(e.format));
        j["location"] = std::string(to_string(e.meta.location));
        j["fault_size_mils"] = e.meta.fault_size_mils;
        j["load_hp"] = e.meta.load_hp;
        j["sampling_rate_hz"] = e.meta.sampling_rate_hz;
        j["sensor"] = std::string(to_string(e.meta.sensor));
        if (!e.channel.empty()) j["channel"] = e.channel;
        doc["entries"].push_back(std::move(j));
    }
    std::ofstream out(manifest);
    if (!out) throw Error(ErrorCode::Io, "cannot write manifest '" + display(manifest) + "'");
    out << doc.dump(2) << '\n';
}

} // namespace vibimg
