#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "vibimg/error.hpp"
#include "vibimg/preprocess.hpp"

using namespace vibimg;
using namespace vibimg::testing;

namespace {

ErrorCode code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::Io;
}

VibrationImage image_2x2(double a, double b, double c, double d) {
    return to_vibration_image(Segment{{a, b, c, d}, FaultLocation::Ball, 0}, 2);
}

std::vector<VibrationImage> labeled(std::size_t count, FaultLocation label, std::mt19937_64& gen) {
    std::vector<VibrationImage> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_image(gen, 3, label));
    return out;
}

} // namespace

TEST_CASE("normalize_signal") {
    CHECK(normalize_signal(std::vector<double>{0, 5, 10}) == std::vector<double>{-1, 0, 1});
    CHECK(normalize_signal(std::vector<double>{3, 3, 3}) == std::vector<double>{0, 0, 0});
    CHECK(code_of([] { normalize_signal(std::vector<double>{1, INFINITY}); }) == ErrorCode::NonFiniteInput);
    CHECK(code_of([] { normalize_signal(std::vector<double>{}); }) == ErrorCode::InvalidArgument);

    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = random_values(gen, 1 + gen() % 300, -1e3, 1e3);
        const auto y = normalize_signal(x);
        const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
        if (x.size() > 1) {
            CHECK(*lo == -1.0);
            CHECK(*hi == 1.0);
        }
        // idempotence
        const auto z = normalize_signal(y);
        for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(std::abs(z[i] - y[i]) <= 1e-12);
    }
}

TEST_CASE("segment_signal") {
    std::vector<double> s(1000);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i);
    const auto segs = segment_signal(s, 20);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].samples.size() == 400);
    CHECK(segs[1].offset == 400);
    CHECK(segs[1].samples.front() == 400.0);

    CHECK(segment_signal(std::vector<double>(400), 20).size() == 1);
    CHECK(code_of([] { segment_signal(std::vector<double>(399), 20); }) == ErrorCode::SignalTooShort);
    CHECK(code_of([] { segment_signal(std::vector<double>(10), 1); }) == ErrorCode::InvalidArgument);

    // conservation: segment lengths + remainder = original length
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t l = 2 + gen() % 10;
        const std::size_t n = l * l + gen() % 2000;
        const auto parts = segment_signal(std::vector<double>(n, 0.5), l);
        std::size_t total = 0;
        for (const auto& p : parts) total += p.samples.size();
        CHECK(total + n % (l * l) == n);
    }
}

TEST_CASE("to_vibration_image follows the row-major mapping") {
    const auto img = image_2x2(0.1, 0.2, 0.3, 0.4);
    CHECK(img.at(0, 0) == 0.1);
    CHECK(img.at(0, 1) == 0.2);
    CHECK(img.at(1, 0) == 0.3);
    CHECK(img.at(1, 1) == 0.4);
    CHECK(img.label == FaultLocation::Ball);

    // l=20: pixel (2,1) in 1-based terms holds sample 21 (1-based)
    std::vector<double> s(400);
    for (std::size_t k = 0; k < 400; ++k) s[k] = static_cast<double>(k + 1) / 400.0;
    const auto big = to_vibration_image(Segment{s, FaultLocation::Baseline, 0}, 20);
    CHECK(big.at(2 - 1, 1 - 1) == s[21 - 1]);

    CHECK(code_of([] { to_vibration_image(Segment{{0, 0, 0}, {}, 0}, 2); }) == ErrorCode::LengthMismatch);
    CHECK(code_of([] { to_vibration_image(Segment{{0, 0, 0, 1.5}, {}, 0}, 2); }) == ErrorCode::RangeViolation);
}

TEST_CASE("from_vibration_image inverts to_vibration_image") {
    const auto seg = from_vibration_image(image_2x2(0.1, 0.2, 0.3, 0.4));
    CHECK(seg.samples == std::vector<double>{0.1, 0.2, 0.3, 0.4});

    std::mt19937_64 gen(5);
    for (std::size_t l : {2, 3, 7, 20}) {
        for (int trial = 0; trial < 50; ++trial) {
            const Segment s{random_values(gen, l * l), FaultLocation::OuterRace, 0};
            CHECK(from_vibration_image(to_vibration_image(s, l)).samples == s.samples);
            const auto img = random_image(gen, l);
            CHECK(to_vibration_image(from_vibration_image(img), l).pixels == img.pixels);
        }
    }
}

TEST_CASE("decimate") {
    CHECK(decimate(std::vector<double>{1, 2, 3, 4, 5}, 2) == std::vector<double>{1, 3, 5});
    const std::vector<double> x{1, 2, 3};
    CHECK(decimate(x, 1) == x);
    CHECK(code_of([&] { decimate(x, 0); }) == ErrorCode::InvalidArgument);

    for (std::size_t n = 0; n < 60; ++n) {
        for (std::size_t f = 1; f <= 7; ++f) {
            CHECK(decimate(std::vector<double>(n), f).size() == (n + f - 1) / f);
        }
    }

    RawRecording rec;
    rec.meta.sampling_rate_hz = 48000;
    rec.samples.assign(48001, 0.0);
    const auto half = decimate(rec, 2);
    CHECK(half.meta.sampling_rate_hz == 24000);
    CHECK(half.samples.size() == 24001);
}

TEST_CASE("decimate with moving-average prefilter") {
    RawRecording rec;
    rec.samples = {1, 3, 5, 7, 9, 11};
    const auto out = decimate(rec, 2, true);
    // causal 2-sample means at indices 0, 2, 4
    CHECK(out.samples == std::vector<double>{1, 4, 8});
    rec.samples.assign(12, 2.5);
    for (double v : decimate(rec, 3, true).samples) CHECK(v == 2.5);
}

TEST_CASE("rotate90") {
    const auto img = image_2x2(0.1, 0.2, 0.3, 0.4);  // [[a,b],[c,d]]
    const auto once = rotate90(img, 1);
    CHECK(once.pixels == std::vector<double>{0.2, 0.4, 0.1, 0.3});  // [[b,d],[a,c]]
    CHECK(once.label == img.label);
    CHECK(rotate90(img, 4).pixels == img.pixels);
    CHECK(rotate90(img, -1).pixels == rotate90(img, 3).pixels);

    // brute force: rotating twice by one turn equals one rotation by two
    std::mt19937_64 gen(9);
    for (int trial = 0; trial < 100; ++trial) {
        const auto r = random_image(gen, 2 + gen() % 20);
        CHECK(rotate90(rotate90(r, 1), 1).pixels == rotate90(r, 2).pixels);
        const std::size_t n = r.side;
        const auto half = rotate90(r, 2);
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) REQUIRE(half.at(y, x) == r.at(n - 1 - y, n - 1 - x));
        }
    }
}

TEST_CASE("balance_by_rotation grows Baseline to the largest class") {
    std::mt19937_64 gen(1);
    std::vector<VibrationImage> data = labeled(100, FaultLocation::Baseline, gen);
    for (auto loc : {FaultLocation::Ball, FaultLocation::InnerRace, FaultLocation::OuterRace}) {
        auto more = labeled(300, loc, gen);
        data.insert(data.end(), more.begin(), more.end());
    }
    const auto before = data;
    const auto res = balance_by_rotation(data);
    CHECK(res.added == 200);
    CHECK_FALSE(res.ceiling_reached);
    REQUIRE(res.images.size() == 1200);
    for (std::size_t i = 0; i < before.size(); ++i) REQUIRE(res.images[i].pixels == before[i].pixels);
    // first 100 copies are single turns of the originals, the next 100 double turns
    CHECK(res.images[1000].pixels == rotate90(before[0], 1).pixels);
    CHECK(res.images[1099].pixels == rotate90(before[99], 1).pixels);
    CHECK(res.images[1100].pixels == rotate90(before[0], 2).pixels);
    for (std::size_t i = 1000; i < 1200; ++i) CHECK(res.images[i].label == FaultLocation::Baseline);
}

TEST_CASE("balance_by_rotation edge cases") {
    std::mt19937_64 gen(2);
    SUBCASE("balanced input is unchanged") {
        std::vector<VibrationImage> data;
        for (auto loc : kAllLocations) {
            auto part = labeled(10, loc, gen);
            data.insert(data.end(), part.begin(), part.end());
        }
        const auto res = balance_by_rotation(data);
        CHECK(res.added == 0);
        CHECK(res.images.size() == data.size());
    }
    SUBCASE("4x ceiling") {
        auto data = labeled(50, FaultLocation::Baseline, gen);
        auto ball = labeled(300, FaultLocation::Ball, gen);
        data.insert(data.end(), ball.begin(), ball.end());
        const auto res = balance_by_rotation(data);
        CHECK(res.ceiling_reached);
        REQUIRE(res.warnings.size() == 1);
        CHECK(res.warnings[0].rfind("CeilingReached", 0) == 0);
        CHECK(std::count_if(res.images.begin(), res.images.end(),
                            [](const auto& i) { return i.label == FaultLocation::Baseline; }) == 200);
    }
    SUBCASE("missing target class") {
        const auto data = labeled(5, FaultLocation::Ball, gen);
        CHECK(code_of([&] { balance_by_rotation(data); }) == ErrorCode::InvalidArgument);
    }
    SUBCASE("property: other classes untouched, target never above 4x") {
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<VibrationImage> data;
            std::array<std::size_t, 4> counts{};
            for (auto loc : kAllLocations) {
                counts[class_index(loc)] = 1 + gen() % 40;
                auto part = labeled(counts[class_index(loc)], loc, gen);
                data.insert(data.end(), part.begin(), part.end());
            }
            std::shuffle(data.begin(), data.end(), gen);
            const auto res = balance_by_rotation(data);
            std::array<std::size_t, 4> after{};
            for (const auto& img : res.images) ++after[class_index(img.label)];
            for (std::size_t c = 1; c < 4; ++c) CHECK(after[c] == counts[c]);
            const std::size_t largest = *std::max_element(counts.begin(), counts.end());
            CHECK(after[0] <= 4 * counts[0]);
            CHECK(after[0] == std::min(largest, 4 * counts[0]));
        }
    }
}

TEST_CASE("build_images normalizes per recording and carries labels") {
    RawRecording rec;
    rec.meta.id = "r";
    rec.meta.location = FaultLocation::InnerRace;
    rec.meta.fault_size_mils = 7;
    for (int i = 0; i < 1000; ++i) rec.samples.push_back(static_cast<double>(i % 17) * 3.0 - 20.0);
    const auto imgs = build_images(rec, {20, 1, false});
    REQUIRE(imgs.size() == 2);
    CHECK(image_count(rec.samples.size(), {20, 1, false}) == 2);
    for (const auto& img : imgs) {
        CHECK(img.label == FaultLocation::InnerRace);
        REQUIRE(img.meta);
        CHECK(img.meta->id == "r");
        for (double p : img.pixels) CHECK((p >= -1.0 && p <= 1.0));
    }
    const auto quarter = build_images(rec, {10, 4, false});
    CHECK(quarter.size() == image_count(1000, {10, 4, false}));
    CHECK(quarter.size() == 2);  // ceil(1000/4) = 250 -> 2 images of 100
    CHECK(quarter.front().meta->sampling_rate_hz == rec.meta.sampling_rate_hz / 4);
}
