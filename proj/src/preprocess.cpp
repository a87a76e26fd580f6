#include "vibimg/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "vibimg/error.hpp"

namespace vibimg {

std::vector<double> normalize_signal(std::span<const double> samples) {
    if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "cannot normalize an empty signal");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!std::isfinite(samples[i])) {
            throw Error(ErrorCode::NonFiniteInput, "sample " + std::to_string(i) + " is not finite");
        }
    }
    const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    std::vector<double> out(samples.size(), 0.0);
    if (hi == lo) return out;
    const double span = hi - lo;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        // Clamp guards the last-ulp overshoot of the division.
        out[i] = std::clamp(2.0 * (samples[i] - lo) / span - 1.0, -1.0, 1.0);
    }
    out[static_cast<std::size_t>(lo_it - samples.begin())] = -1.0;
    out[static_cast<std::size_t>(hi_it - samples.begin())] = 1.0;
    return out;
}

std::vector<Segment> segment_signal(std::span<const double> samples, std::size_t side, FaultLocation label) {
    if (side < 2) throw Error(ErrorCode::InvalidArgument, "image side must be at least 2");
    const std::size_t len = side * side;
    if (samples.size() < len) {
        throw Error(ErrorCode::SignalTooShort, std::to_string(samples.size()) + " samples, need at least " +
                                                   std::to_string(len));
    }
    std::vector<Segment> out;
    out.reserve(samples.size() / len);
    for (std::size_t off = 0; off + len <= samples.size(); off += len) {
        out.push_back(Segment{{samples.begin() + off, samples.begin() + off + len}, label, off});
    }
    return out;
}

VibrationImage to_vibration_image(const Segment& segment, std::size_t side) {
    if (side < 2) throw Error(ErrorCode::InvalidArgument, "image side must be at least 2");
    if (segment.samples.size() != side * side) {
        throw Error(ErrorCode::LengthMismatch, "segment has " + std::to_string(segment.samples.size()) +
                                                   " samples, side " + std::to_string(side) + " needs " +
                                                   std::to_string(side * side));
    }
    VibrationImage img;
    img.side = side;
    img.label = segment.label;
    img.pixels.resize(side * side);
    for (std::size_t i = 1; i <= side; ++i) {
        for (std::size_t j = 1; j <= side; ++j) {
            const double s = segment.samples[(i - 1) * side + j - 1];
            if (!(s >= -1.0 && s <= 1.0)) {
                throw Error(ErrorCode::RangeViolation, "sample " + std::to_string((i - 1) * side + j) +
                                                           " outside [-1, 1]");
            }
            img.pixels[(i - 1) * side + (j - 1)] = s;
        }
    }
    return img;
}

Segment from_vibration_image(const VibrationImage& image) {
    Segment seg;
    seg.label = image.label;
    seg.samples.resize(image.side * image.side);
    for (std::size_t i = 1; i <= image.side; ++i) {
        for (std::size_t j = 1; j <= image.side; ++j) {
            seg.samples[(i - 1) * image.side + j - 1] = image.at(i - 1, j - 1);
        }
    }
    return seg;
}

std::vector<double> decimate(std::span<const double> samples, std::size_t factor) {
    if (factor == 0) throw Error(ErrorCode::InvalidArgument, "decimation factor must be at least 1");
    std::vector<double> out;
    out.reserve((samples.size() + factor - 1) / factor);
    for (std::size_t i = 0; i < samples.size(); i += factor) out.push_back(samples[i]);
    return out;
}

RawRecording decimate(const RawRecording& recording, std::size_t factor, bool prefilter) {
    if (factor == 0) throw Error(ErrorCode::InvalidArgument, "decimation factor must be at least 1");
    RawRecording out;
    out.meta = recording.meta;
    out.meta.sampling_rate_hz = recording.meta.sampling_rate_hz / static_cast<double>(factor);
    if (!prefilter || factor == 1) {
        out.samples = decimate(recording.samples, factor);
        return out;
    }
    // Causal moving average over the last `factor` samples (fewer at the start).
    const auto& s = recording.samples;
    out.samples.reserve((s.size() + factor - 1) / factor);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        acc += s[i];
        if (i >= factor) acc -= s[i - factor];
        if (i % factor == 0) {
            const std::size_t n = std::min(i + 1, factor);
            out.samples.push_back(acc / static_cast<double>(n));
        }
    }
    return out;
}

VibrationImage rotate90(const VibrationImage& image, int quarter_turns) {
    const int turns = ((quarter_turns % 4) + 4) % 4;
    VibrationImage out = image;
    const std::size_t n = image.side;
    for (int t = 0; t < turns; ++t) {
        const auto src = out.pixels;
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                out.pixels[r * n + c] = src[c * n + (n - 1 - r)];
            }
        }
    }
    return out;
}

BalanceResult balance_by_rotation(std::vector<VibrationImage> images, FaultLocation target) {
    std::array<std::size_t, kNumLocations> counts{};
    std::vector<std::size_t> originals;
    for (std::size_t i = 0; i < images.size(); ++i) {
        ++counts[class_index(images[i].label)];
        if (images[i].label == target) originals.push_back(i);
    }
    if (originals.empty()) {
        throw Error(ErrorCode::InvalidArgument,
                    "no images of class " + std::string(to_string(target)) + " to augment");
    }
    const std::size_t goal = *std::max_element(counts.begin(), counts.end());
    const std::size_t ceiling = 4 * originals.size();

    BalanceResult result;
    std::size_t have = originals.size();
    images.reserve(std::min(goal, ceiling) - have + images.size());
    for (int turn = 1; turn <= 3 && have < goal; ++turn) {
        for (std::size_t k = 0; k < originals.size() && have < goal; ++k) {
            images.push_back(rotate90(images[originals[k]], turn));
            ++have;
            ++result.added;
        }
    }
    if (have < goal) {
        result.ceiling_reached = true;
        result.warnings.push_back("CeilingReached: class " + std::string(to_string(target)) + " stops at " +
                                  std::to_string(have) + " images (4x " + std::to_string(originals.size()) +
                                  "), largest class has " + std::to_string(goal));
    }
    result.images = std::move(images);
    return result;
}

std::size_t image_count(std::size_t num_samples, const ImageOptions& options) {
    if (options.decimation == 0 || options.side < 2) return 0;
    const std::size_t kept = (num_samples + options.decimation - 1) / options.decimation;
    return kept / (options.side * options.side);
}

std::vector<VibrationImage> build_images(const RawRecording& recording, const ImageOptions& options) {
    const RawRecording reduced = decimate(recording, options.decimation, options.prefilter);
    const auto normalized = normalize_signal(reduced.samples);
    const auto meta = std::make_shared<const RecordingMeta>(reduced.meta);
    std::vector<VibrationImage> out;
    for (const auto& seg : segment_signal(normalized, options.side, recording.meta.location)) {
        auto img = to_vibration_image(seg, options.side);
        img.meta = meta;
        out.push_back(std::move(img));
    }
    return out;
}

} // namespace vibimg
