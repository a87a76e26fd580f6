#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vibimg/preprocess.hpp"
#include "vibimg/types.hpp"

namespace vibimg {

/// Parameters of one synthetic bearing-like signal.
///
/// Fault classes are a periodic train of exponentially decaying sinusoid
/// bursts: every 1/impulse_rate_hz seconds a burst
///   amplitude * exp(-decay * t) * sin(2 pi resonance_hz t)
/// starts, and Gaussian noise of deviation noise_sigma is added. The
/// Baseline class is noise plus a sinusoid of frequency impulse_rate_hz and
/// amplitude `amplitude` (shaft rotation); resonance_hz and decay are unused.
struct SynthConfig {
    FaultLocation location = FaultLocation::Baseline;
    double impulse_rate_hz = 30.0;
    double resonance_hz = 3000.0;
    double decay = 1200.0;
    double noise_sigma = 0.1;
    double amplitude = 1.0;
    std::uint64_t seed = 0;
};

/// Fixed per-class defaults (rates in Hz):
///   Baseline   sinusoid 30, amplitude 0.2
///   Ball       impulses 700, resonance 3000
///   InnerRace  impulses 1100, resonance 4200
///   OuterRace  impulses 450, resonance 2400
SynthConfig default_synth_config(FaultLocation location, std::uint64_t seed);

/// Exactly `num_samples` samples. Noise comes from Rng(cfg.seed) (mt19937_64 +
/// Box-Muller); the first burst's phase within the period is drawn first.
/// Throws InvalidRate when impulse_rate_hz >= fs_hz / 2.
std::vector<double> generate_samples(const SynthConfig& cfg, std::size_t num_samples, double fs_hz);

/// round(duration_s * fs_hz) samples wrapped as a labeled recording.
RawRecording generate_signal(const SynthConfig& cfg, double duration_s, double fs_hz);

/// One recording per class, long enough for exactly `per_class` images of
/// side `side`. Class c uses seed derive_seed(seed, c).
std::vector<RawRecording> generate_recordings(std::size_t per_class, std::size_t side, double fs_hz,
                                              std::uint64_t seed);

/// generate_recordings followed by build_images: per_class images for each
/// of the four classes, in class order.
std::vector<VibrationImage> generate_dataset(std::size_t per_class, std::size_t side, double fs_hz,
                                             std::uint64_t seed);

} // namespace vibimg
