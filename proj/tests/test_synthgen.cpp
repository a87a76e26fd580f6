#include <doctest.h>

#include <cmath>

#include "centroid_oracle.hpp"
#include "test_util.hpp"
#include "vibimg/error.hpp"
#include "vibimg/synthgen.hpp"

using namespace vibimg;
using namespace vibimg::testing;

TEST_CASE("generate_signal is deterministic and sized by duration") {
    const auto cfg = default_synth_config(FaultLocation::InnerRace, 42);
    const auto a = generate_signal(cfg, 0.25, 48000);
    const auto b = generate_signal(cfg, 0.25, 48000);
    CHECK(a.samples == b.samples);
    CHECK(generate_signal(cfg, 1.0, 12000).samples.size() == 12000);
    CHECK(a.samples.size() == 12000);
    CHECK(a.meta.location == FaultLocation::InnerRace);
    CHECK_NOTHROW(validate(a));

    const auto other = generate_signal(default_synth_config(FaultLocation::InnerRace, 43), 0.25, 48000);
    CHECK(other.samples != a.samples);
}

TEST_CASE("impulse rate at or above Nyquist is rejected") {
    auto cfg = default_synth_config(FaultLocation::Ball, 1);
    cfg.impulse_rate_hz = 6000;
    try {
        generate_signal(cfg, 0.1, 12000);
        FAIL("expected InvalidRate");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidRate);
    }
    cfg.impulse_rate_hz = 5999;
    CHECK_NOTHROW(generate_signal(cfg, 0.1, 12000));
}

TEST_CASE("noise-free fault bursts repeat every fs / impulse_rate samples") {
    for (auto loc : {FaultLocation::Ball, FaultLocation::InnerRace, FaultLocation::OuterRace}) {
        auto cfg = default_synth_config(loc, 5);
        cfg.noise_sigma = 0.0;
        const double fs = 48000;
        const auto x = generate_samples(cfg, 48000, fs);
        // Burst onsets: first sample above 0.7 * amplitude after at least
        // 0.4 periods without any such sample.
        const double period = fs / cfg.impulse_rate_hz;
        std::vector<double> onsets;
        double last_loud = -1e9;
        for (std::size_t n = 0; n < x.size(); ++n) {
            if (std::abs(x[n]) > 0.7 * cfg.amplitude) {
                if (static_cast<double>(n) - last_loud > 0.4 * period) onsets.push_back(static_cast<double>(n));
                last_loud = static_cast<double>(n);
            }
        }
        INFO("class " << to_string(loc));
        REQUIRE(onsets.size() > 100);
        // skip the start-up bursts, which lack the tails of earlier ones
        for (std::size_t i = 4; i < onsets.size(); ++i) {
            REQUIRE(std::abs((onsets[i] - onsets[i - 1]) - period) <= 1.0);
        }
        // energy sits in the first half of each period after an onset
        double near = 0.0, total = 0.0;
        for (std::size_t n = static_cast<std::size_t>(onsets[4]); n < x.size(); ++n) {
            total += x[n] * x[n];
            if (std::fmod(static_cast<double>(n) - onsets[4] + 2.0, period) < 0.5 * period) near += x[n] * x[n];
        }
        CHECK(near / total > 0.6);
    }
}

TEST_CASE("generate_dataset") {
    const auto a = generate_dataset(100, 20, 48000, 7);
    REQUIRE(a.size() == 400);
    std::array<std::size_t, 4> counts{};
    for (const auto& img : a) {
        ++counts[class_index(img.label)];
        CHECK(img.side == 20);
        for (double p : img.pixels) REQUIRE((std::isfinite(p) && p >= -1.0 && p <= 1.0));
    }
    for (auto c : counts) CHECK(c == 100);

    const auto b = generate_dataset(100, 20, 48000, 7);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].pixels == b[i].pixels);
}

TEST_CASE("synthetic classes are separable by a nearest-centroid oracle") {
    const auto data = generate_dataset(150, 20, 48000, 0);
    const double acc = nearest_centroid_accuracy(data);
    MESSAGE("nearest-centroid accuracy " << acc);
    CHECK(acc > 0.5);
}
