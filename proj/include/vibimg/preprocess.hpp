#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vibimg/types.hpp"

namespace vibimg {

/// l² consecutive samples cut from a recording.
struct Segment {
    std::vector<double> samples;
    FaultLocation label = FaultLocation::Baseline;
    std::size_t offset = 0;  // index of samples[0] in the parent signal
};

/// Square vibration image. Row-major pixels: pixel(i, j) with 1-based i, j
/// holds signal sample (i-1)*l + j of the segment it was built from.
struct VibrationImage {
    std::size_t side = 0;
    std::vector<double> pixels;
    FaultLocation label = FaultLocation::Baseline;
    std::shared_ptr<const RecordingMeta> meta;

    /// 0-based row / column.
    double at(std::size_t row, std::size_t col) const { return pixels[row * side + col]; }
};

/// Min-max maps the whole sequence onto [-1, 1]; a constant input maps to
/// all zeros. Throws NonFiniteInput, or InvalidArgument on empty input.
std::vector<double> normalize_signal(std::span<const double> samples);

/// Non-overlapping windows of l² samples; a trailing remainder shorter than
/// l² is dropped. Throws SignalTooShort, or InvalidArgument for l < 2.
std::vector<Segment> segment_signal(std::span<const double> samples, std::size_t side,
                                    FaultLocation label = FaultLocation::Baseline);

/// Builds the image pixel(i, j) = S[(i-1)*l + j] (1-based).
/// Throws LengthMismatch or RangeViolation (sample outside [-1, 1]).
VibrationImage to_vibration_image(const Segment& segment, std::size_t side);

/// Exact inverse of to_vibration_image (offset is not recoverable and is 0).
Segment from_vibration_image(const VibrationImage& image);

/// Keeps samples 0, factor, 2*factor, ...; output length is ceil(n / factor).
/// Throws InvalidArgument for factor 0.
std::vector<double> decimate(std::span<const double> samples, std::size_t factor);

/// Stride decimation of a recording; the sampling rate in the returned
/// metadata is divided by factor. With `prefilter`, a causal moving average
/// of `factor` samples is applied first.
RawRecording decimate(const RawRecording& recording, std::size_t factor, bool prefilter = false);

/// Counter-clockwise rotation by 90 degrees per quarter turn (taken mod 4).
VibrationImage rotate90(const VibrationImage& image, int quarter_turns);

struct BalanceResult {
    std::vector<VibrationImage> images;
    std::size_t added = 0;
    bool ceiling_reached = false;
    std::vector<std::string> warnings;
};

/// Appends rotated copies of the `target` class (all originals turned once,
/// then twice, then three times) until the class matches the largest class
/// count or reaches 4x its original count. Other classes are untouched and
/// the input order is kept. Throws InvalidArgument if no target image exists.
BalanceResult balance_by_rotation(std::vector<VibrationImage> images,
                                  FaultLocation target = FaultLocation::Baseline);

struct ImageOptions {
    std::size_t side = 20;
    std::size_t decimation = 1;
    bool prefilter = false;
};

/// Recording to images: decimate, normalize over the whole (decimated)
/// recording, segment, then map each segment to an image carrying the
/// recording's label and metadata.
std::vector<VibrationImage> build_images(const RawRecording& recording, const ImageOptions& options = {});

/// Number of images build_images would produce without materializing them.
std::size_t image_count(std::size_t num_samples, const ImageOptions& options);

} // namespace vibimg
