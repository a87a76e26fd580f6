#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vibimg/experiment.hpp"
#include "vibimg/model.hpp"
#include "vibimg/preprocess.hpp"

namespace vibimg {

/// Everything a command-line run needs. The JSON config file uses exactly
/// these field names as keys; unknown keys are rejected.
struct RunConfig {
    // training
    std::size_t epochs = 150;
    std::size_t batch_size = 50;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    std::size_t num_classes = 4;
    std::size_t conv1_filters = 6;
    std::size_t conv2_filters = 12;
    std::size_t hidden = 64;
    std::string pooling = "avg";  // avg | max

    // split
    double train_fraction = 5.0 / 6.0;
    bool stratified = false;
    bool split_by_recording = false;

    // preprocessing
    std::size_t l = 20;
    std::size_t decimation_factor = 1;
    bool prefilter = false;
    std::string augment = "auto";  // auto | on | off

    // experiment protocol
    std::size_t runs = 5;
    std::vector<std::size_t> factors = {1, 2, 3, 4};

    // dataset source: a manifest if set, otherwise synthetic data
    std::string manifest;
    std::size_t synth_per_class = 150;
    double synth_fs_hz = 48000.0;

    // outputs
    std::string out;
    std::string model;
    std::string loss_log;
    std::string format = "markdown";  // csv | markdown
};

/// Throws InvalidConfig for malformed JSON, unknown keys or wrong types.
RunConfig parse_run_config(const std::string& json_text);

/// Reads a config file; a relative `manifest` is resolved against the
/// file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

std::string to_json(const RunConfig& cfg);

/// Throws InvalidConfig (or Io for an unreadable manifest path).
void validate(const RunConfig& cfg);

TrainConfig train_config(const RunConfig& cfg);
SplitSpec split_spec(const RunConfig& cfg);
ImageOptions image_options(const RunConfig& cfg);
Augmentation augmentation(const RunConfig& cfg);
ReportFormat report_format(const RunConfig& cfg);

/// Recordings from the manifest, or synthetic ones (synth_per_class images
/// per class at side l, synth_fs_hz, seed).
std::vector<RawRecording> load_recordings(const RunConfig& cfg);

/// load_recordings followed by build_images with image_options(cfg).
std::vector<VibrationImage> load_images(const RunConfig& cfg);

} // namespace vibimg
