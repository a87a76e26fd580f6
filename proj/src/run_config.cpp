#include "vibimg/run_config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vibimg/error.hpp"
#include "vibimg/signal_io.hpp"
#include "vibimg/synthgen.hpp"

namespace vibimg {

using nlohmann::json;

namespace {

template <typename Config, typename Visitor>
void visit_fields(Config& c, Visitor&& v) {
    v("epochs", c.epochs);
    v("batch_size", c.batch_size);
    v("learning_rate", c.learning_rate);
    v("momentum", c.momentum);
    v("seed", c.seed);
    v("num_classes", c.num_classes);
    v("conv1_filters", c.conv1_filters);
    v("conv2_filters", c.conv2_filters);
    v("hidden", c.hidden);
    v("pooling", c.pooling);
    v("train_fraction", c.train_fraction);
    v("stratified", c.stratified);
    v("split_by_recording", c.split_by_recording);
    v("l", c.l);
    v("decimation_factor", c.decimation_factor);
    v("prefilter", c.prefilter);
    v("augment", c.augment);
    v("runs", c.runs);
    v("factors", c.factors);
    v("manifest", c.manifest);
    v("synth_per_class", c.synth_per_class);
    v("synth_fs_hz", c.synth_fs_hz);
    v("out", c.out);
    v("model", c.model);
    v("loss_log", c.loss_log);
    v("format", c.format);
}

template <typename T>
bool json_type_ok(const json& j) {
    if constexpr (std::is_same_v<T, bool>) {
        return j.is_boolean();
    } else if constexpr (std::is_same_v<T, std::string>) {
        return j.is_string();
    } else if constexpr (std::is_floating_point_v<T>) {
        return j.is_number();
    } else if constexpr (std::is_integral_v<T>) {
        return j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0);
    } else {
        if (!j.is_array()) return false;
        for (const auto& e : j) {
            if (!json_type_ok<typename T::value_type>(e)) return false;
        }
        return true;
    }
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");

    RunConfig cfg;
    std::size_t known = 0;
    visit_fields(cfg, [&](const char* key, auto& field) {
        using T = std::decay_t<decltype(field)>;
        if (!doc.contains(key)) return;
        ++known;
        if (!json_type_ok<T>(doc[key])) {
            throw Error(ErrorCode::InvalidConfig, std::string("config key '") + key + "' has the wrong type");
        }
        field = doc[key].get<T>();
    });
    if (known != doc.size()) {
        RunConfig probe;
        for (const auto& [key, value] : doc.items()) {
            bool found = false;
            visit_fields(probe, [&](const char* k, auto&) { found = found || key == k; });
            if (!found) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    RunConfig cfg = parse_run_config(buf.str());
    if (!cfg.manifest.empty() && std::filesystem::path(cfg.manifest).is_relative()) {
        cfg.manifest = (path.parent_path() / cfg.manifest).string();
    }
    return cfg;
}

std::string to_json(const RunConfig& cfg) {
    json doc = json::object();
    visit_fields(cfg, [&](const char* key, const auto& field) { doc[key] = field; });
    return doc.dump(2);
}

void validate(const RunConfig& cfg) {
    const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
    train_config(cfg).validate();
    split_spec(cfg).validate();
    if (cfg.l < 2) fail("l must be at least 2");
    if (cfg.decimation_factor < 1) fail("decimation_factor must be at least 1");
    if (cfg.runs < 2) fail("runs must be at least 2");
    if (cfg.factors.empty()) fail("factors must not be empty");
    for (auto f : cfg.factors) {
        if (f < 1) fail("every factor must be at least 1");
    }
    if (cfg.pooling != "avg" && cfg.pooling != "max") fail("pooling must be 'avg' or 'max'");
    if (cfg.augment != "auto" && cfg.augment != "on" && cfg.augment != "off") {
        fail("augment must be 'auto', 'on' or 'off'");
    }
    if (!parse_report_format(cfg.format)) fail("format must be 'csv' or 'markdown'");
    if (cfg.manifest.empty()) {
        if (cfg.synth_per_class < 1) fail("synth_per_class must be at least 1");
        if (!(cfg.synth_fs_hz > 0.0)) fail("synth_fs_hz must be positive");
    } else if (!std::filesystem::exists(cfg.manifest)) {
        throw Error(ErrorCode::Io, "manifest '" + cfg.manifest + "' does not exist");
    }
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.epochs = cfg.epochs;
    t.batch_size = cfg.batch_size;
    t.learning_rate = cfg.learning_rate;
    t.momentum = cfg.momentum;
    t.seed = cfg.seed;
    t.num_classes = cfg.num_classes;
    t.conv1_filters = cfg.conv1_filters;
    t.conv2_filters = cfg.conv2_filters;
    t.hidden = cfg.hidden;
    t.pooling = cfg.pooling == "max" ? Pooling::Max : Pooling::Average;
    return t;
}

SplitSpec split_spec(const RunConfig& cfg) {
    SplitSpec s;
    s.train_fraction = cfg.train_fraction;
    s.seed = cfg.seed;
    s.stratified = cfg.stratified;
    s.by_recording = cfg.split_by_recording;
    return s;
}

ImageOptions image_options(const RunConfig& cfg) {
    return ImageOptions{cfg.l, cfg.decimation_factor, cfg.prefilter};
}

Augmentation augmentation(const RunConfig& cfg) {
    if (cfg.augment == "on") return Augmentation::On;
    if (cfg.augment == "off") return Augmentation::Off;
    return Augmentation::Auto;
}

ReportFormat report_format(const RunConfig& cfg) {
    return parse_report_format(cfg.format).value_or(ReportFormat::Markdown);
}

std::vector<RawRecording> load_recordings(const RunConfig& cfg) {
    if (!cfg.manifest.empty()) return load_catalog(cfg.manifest).recordings;
    return generate_recordings(cfg.synth_per_class, cfg.l, cfg.synth_fs_hz, cfg.seed);
}

std::vector<VibrationImage> load_images(const RunConfig& cfg) {
    std::vector<VibrationImage> images;
    const auto opts = image_options(cfg);
    for (const auto& rec : load_recordings(cfg)) {
        auto imgs = build_images(rec, opts);
        std::move(imgs.begin(), imgs.end(), std::back_inserter(images));
    }
    return images;
}

} // namespace vibimg
