#include "vibimg/synthgen.hpp"

#include <cmath>
#include <numbers>

#include "vibimg/error.hpp"
#include "vibimg/rng.hpp"

namespace vibimg {

SynthConfig default_synth_config(FaultLocation location, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.location = location;
    cfg.seed = seed;
    switch (location) {
    case FaultLocation::Baseline:
        cfg.impulse_rate_hz = 30.0;
        cfg.amplitude = 0.2;
        break;
    case FaultLocation::Ball:
        cfg.impulse_rate_hz = 700.0;
        cfg.resonance_hz = 3000.0;
        break;
    case FaultLocation::InnerRace:
        cfg.impulse_rate_hz = 1100.0;
        cfg.resonance_hz = 4200.0;
        break;
    case FaultLocation::OuterRace:
        cfg.impulse_rate_hz = 450.0;
        cfg.resonance_hz = 2400.0;
        break;
    }
    return cfg;
}

std::vector<double> generate_samples(const SynthConfig& cfg, std::size_t num_samples, double fs_hz) {
    if (!(fs_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling rate must be positive");
    if (!(cfg.impulse_rate_hz > 0.0) || cfg.impulse_rate_hz >= fs_hz / 2.0) {
        throw Error(ErrorCode::InvalidRate, "impulse rate " + std::to_string(cfg.impulse_rate_hz) +
                                                " Hz must be positive and below Nyquist (" +
                                                std::to_string(fs_hz / 2.0) + " Hz)");
    }
    if (cfg.noise_sigma < 0.0 || !(cfg.amplitude > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "noise_sigma must be >= 0 and amplitude > 0");
    }

    constexpr double two_pi = 2.0 * std::numbers::pi;
    Rng rng(cfg.seed);
    const double period = 1.0 / cfg.impulse_rate_hz;
    const double phase = rng.uniform() * period;

    std::vector<double> out(num_samples);
    if (cfg.location == FaultLocation::Baseline) {
        for (std::size_t n = 0; n < num_samples; ++n) {
            const double t = static_cast<double>(n) / fs_hz;
            out[n] = cfg.amplitude * std::sin(two_pi * cfg.impulse_rate_hz * (t + phase));
        }
    } else {
        // Bursts older than 30 time constants contribute below 1e-13.
        const double horizon = 30.0 / cfg.decay;
        for (std::size_t n = 0; n < num_samples; ++n) {
            const double t = static_cast<double>(n) / fs_hz;
            if (t < phase) continue;
            double acc = 0.0;
            for (auto k = static_cast<long long>(std::floor((t - phase) / period)); k >= 0; --k) {
                const double dt = t - (phase + static_cast<double>(k) * period);
                if (dt > horizon) break;
                acc += std::exp(-cfg.decay * dt) * std::sin(two_pi * cfg.resonance_hz * dt);
            }
            out[n] = cfg.amplitude * acc;
        }
    }
    if (cfg.noise_sigma > 0.0) {
        for (auto& v : out) v += cfg.noise_sigma * rng.normal();
    }
    return out;
}

namespace {

RecordingMeta synth_meta(FaultLocation location, double fs_hz) {
    RecordingMeta meta;
    meta.id = "synth_" + std::string(to_string(location));
    meta.location = location;
    meta.fault_size_mils = location == FaultLocation::Baseline ? 0 : 7;
    meta.load_hp = 0;
    meta.sampling_rate_hz = fs_hz;
    meta.sensor = Sensor::DriveEnd;
    return meta;
}

} // namespace

RawRecording generate_signal(const SynthConfig& cfg, double duration_s, double fs_hz) {
    const double n = std::round(duration_s * fs_hz);
    if (!(n >= 1.0)) throw Error(ErrorCode::InvalidArgument, "duration * fs must yield at least one sample");
    RawRecording rec;
    rec.meta = synth_meta(cfg.location, fs_hz);
    rec.samples = generate_samples(cfg, static_cast<std::size_t>(n), fs_hz);
    return rec;
}

std::vector<RawRecording> generate_recordings(std::size_t per_class, std::size_t side, double fs_hz,
                                              std::uint64_t seed) {
    if (per_class == 0) throw Error(ErrorCode::InvalidArgument, "per_class must be at least 1");
    if (side < 2) throw Error(ErrorCode::InvalidArgument, "image side must be at least 2");
    std::vector<RawRecording> out;
    for (auto loc : kAllLocations) {
        const auto cfg = default_synth_config(loc, derive_seed(seed, class_index(loc)));
        RawRecording rec;
        rec.meta = synth_meta(loc, fs_hz);
        rec.samples = generate_samples(cfg, per_class * side * side, fs_hz);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<VibrationImage> generate_dataset(std::size_t per_class, std::size_t side, double fs_hz,
                                             std::uint64_t seed) {
    std::vector<VibrationImage> out;
    ImageOptions opts;
    opts.side = side;
    for (const auto& rec : generate_recordings(per_class, side, fs_hz, seed)) {
        auto imgs = build_images(rec, opts);
        std::move(imgs.begin(), imgs.end(), std::back_inserter(out));
    }
    return out;
}

} // namespace vibimg
