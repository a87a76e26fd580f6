#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "test_util.hpp"
#include "vibimg/error.hpp"
#include "vibimg/layers.hpp"
#include "vibimg/model.hpp"
#include "vibimg/synthgen.hpp"

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

Tensor random_tensor(std::mt19937_64& gen, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    t.data = random_values(gen, t.size());
    return t;
}

// Straightforward reference: one output element at a time.
Tensor conv_reference(const Tensor& in, const Tensor& w, const Tensor& b) {
    const std::size_t K = w.dim(0), C = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::size_t H = in.dim(1), W = in.dim(2), oh = H - kh + 1, ow = W - kw + 1;
    Tensor out({K, oh, ow});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double s = b[k];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t dy = 0; dy < kh; ++dy)
                        for (std::size_t dx = 0; dx < kw; ++dx)
                            s += in[(c * H + y + dy) * W + x + dx] * w[((k * C + c) * kh + dy) * kw + dx];
                out[(k * oh + y) * ow + x] = s;
            }
    return out;
}

double rel_error(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-12}); }

/// Max relative error between `analytic` and central differences of `loss`
/// with respect to every element of `param`.
double fd_check(Tensor& param, const Tensor& analytic, const std::function<double()>& loss, double eps = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + eps;
        const double up = loss();
        param[i] = saved - eps;
        const double down = loss();
        param[i] = saved;
        worst = std::max(worst, rel_error(analytic[i], (up - down) / (2 * eps)));
    }
    return worst;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

TEST_CASE("conv2d_forward examples") {
    const Tensor ones({1, 3, 3}, 1.0);
    const auto out = conv2d_forward(ones, Tensor({1, 1, 2, 2}, 1.0), Tensor({1}));
    CHECK(out.shape == std::vector<std::size_t>{1, 2, 2});
    CHECK(out.data == std::vector<double>{4, 4, 4, 4});

    std::mt19937_64 gen(1);
    const auto in = random_tensor(gen, {1, 4, 5});
    const auto id = conv2d_forward(in, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}));
    CHECK(id.data == in.data);

    CHECK(code_of([&] { conv2d_forward(in, Tensor({1, 2, 2, 2}), Tensor({1})); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([&] { conv2d_forward(in, Tensor({1, 1, 5, 5}), Tensor({1})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("conv2d_forward matches the loop reference") {
    std::mt19937_64 gen(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto in = random_tensor(gen, {2, 6, 6});
        const auto w = random_tensor(gen, {3, 2, 3, 3});
        const auto b = random_tensor(gen, {3});
        const auto got = conv2d_forward(in, w, b);
        const auto want = conv_reference(in, w, b);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(std::abs(got[i] - want[i]) <= 1e-12);
    }
}

TEST_CASE("conv2d_backward against finite differences") {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 5; ++trial) {
        auto in = random_tensor(gen, {2, 6, 5});
        auto w = random_tensor(gen, {3, 2, 3, 2});
        auto b = random_tensor(gen, {3});
        const auto up = random_tensor(gen, {3, 4, 4});
        // scalar loss L = <upstream, conv(in)> so dL/dout = upstream
        const auto loss = [&] { return dot(up, conv_reference(in, w, b)); };
        const auto g = conv2d_backward(in, w, up);
        CHECK(fd_check(in, g.input, loss) < 1e-4);
        CHECK(fd_check(w, g.weights, loss) < 1e-4);
        CHECK(fd_check(b, g.bias, loss) < 1e-4);
        for (std::size_t k = 0; k < 3; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < 16; ++i) s += up[k * 16 + i];
            CHECK(g.bias[k] == doctest::Approx(s).epsilon(1e-12));
        }
    }
    const auto in = random_tensor(gen, {1, 4, 4});
    const auto g = conv2d_backward(in, random_tensor(gen, {2, 1, 3, 3}), Tensor({2, 2, 2}));
    for (const Tensor* t : {&g.input, &g.weights, &g.bias}) {
        for (double v : t->data) CHECK(v == 0.0);
    }
    CHECK(code_of([&] { conv2d_backward(in, Tensor({2, 1, 3, 3}), Tensor({2, 3, 3})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("average pooling") {
    const Tensor x({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(avgpool2_forward(x).data == std::vector<double>{2.5});
    const auto c = avgpool2_forward(Tensor({3, 4, 6}, 0.7));
    CHECK(c.shape == std::vector<std::size_t>{3, 2, 3});
    for (double v : c.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(avgpool2_backward(Tensor({1, 1, 1}, 1.0)).data == std::vector<double>{0.25, 0.25, 0.25, 0.25});
    CHECK(code_of([] { avgpool2_forward(Tensor({1, 3, 4})); }) == ErrorCode::OddDimension);

    std::mt19937_64 gen(4);
    auto in = random_tensor(gen, {2, 4, 6});
    const auto up = random_tensor(gen, {2, 2, 3});
    CHECK(fd_check(in, avgpool2_backward(up), [&] { return dot(up, avgpool2_forward(in)); }) < 1e-4);
}

TEST_CASE("max pooling") {
    const Tensor x({1, 2, 4}, std::vector<double>{1, 5, 0, 0, 3, 2, 0, 0});
    std::vector<std::size_t> arg;
    const auto y = maxpool2_forward(x, arg);
    CHECK(y.data == std::vector<double>{5, 0});
    CHECK(arg == std::vector<std::size_t>{1, 2});  // tie goes to the first in the window
    const auto g = maxpool2_backward(Tensor({1, 1, 2}, std::vector<double>{1, 2}), arg, x.shape);
    CHECK(g.data == std::vector<double>{0, 1, 2, 0, 0, 0, 0, 0});
}

TEST_CASE("dense layer") {
    const Tensor x({2}, std::vector<double>{-1, 2});
    const Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1});
    CHECK(dense_forward(x, eye, Tensor({2}), Activation::None).data == x.data);
    CHECK(dense_forward(x, eye, Tensor({2}), Activation::ReLU).data == std::vector<double>{0, 2});
    CHECK(code_of([&] { dense_forward(x, Tensor({2, 3}), Tensor({2}), Activation::None); }) ==
          ErrorCode::ShapeMismatch);

    std::mt19937_64 gen(5);
    for (auto act : {Activation::None, Activation::ReLU}) {
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t n = 2 + gen() % 8, m = 1 + gen() % 6;
            auto in = random_tensor(gen, {n});
            auto w = random_tensor(gen, {m, n});
            auto b = random_tensor(gen, {m});
            const auto up = random_tensor(gen, {m});
            const auto out = dense_forward(in, w, b, act);
            const auto g = dense_backward(in, w, out, up, act);
            const auto loss = [&] { return dot(up, dense_forward(in, w, b, act)); };
            CHECK(fd_check(in, g.input, loss) < 1e-4);
            CHECK(fd_check(w, g.weights, loss) < 1e-4);
            CHECK(fd_check(b, g.bias, loss) < 1e-4);
        }
    }
    // subgradient at the kink is 0
    const Tensor zero_in({1}, std::vector<double>{0.0});
    const Tensor w1({1, 1}, std::vector<double>{1.0});
    const auto out = dense_forward(zero_in, w1, Tensor({1}), Activation::ReLU);
    CHECK(dense_backward(zero_in, w1, out, Tensor({1}, 1.0), Activation::ReLU).bias[0] == 0.0);
}

TEST_CASE("softmax cross entropy") {
    const auto flat = softmax_cross_entropy(Tensor({4}, 0.3), 2);
    CHECK(flat.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(flat.loss == doctest::Approx(1.386294).epsilon(1e-6));
    CHECK(softmax_cross_entropy(Tensor({4}, std::vector<double>{100, 0, 0, 0}), 0).loss < 1e-10);
    CHECK(code_of([] { softmax_cross_entropy(Tensor({4}), 4); }) == ErrorCode::LabelOutOfRange);

    std::mt19937_64 gen(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto logits = random_tensor(gen, {5});
        for (auto& v : logits.data) v *= 4.0;
        const std::size_t label = gen() % 5;
        const auto r = softmax_cross_entropy(logits, label);
        CHECK(fd_check(logits, r.grad, [&] { return softmax_cross_entropy(logits, label).loss; }) < 1e-4);
    }
    for (int trial = 0; trial < 100; ++trial) {
        auto logits = random_values(gen, 4, -1e3, 1e3);
        const auto p = softmax(logits);
        double s = 0.0;
        for (double v : p) {
            CHECK((v >= 0.0 && v <= 1.0));
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
}

TEST_CASE("sgd with momentum") {
    std::vector<Tensor> w{Tensor({1}, 0.0)};
    std::vector<Tensor> g{Tensor({1}, 1.0)};
    auto state = OptimizerState::zeros_like(w);
    sgd_momentum_step(w, g, state, 0.01, 0.9);
    CHECK(state.velocity[0][0] == 1.0);
    CHECK(w[0][0] == doctest::Approx(-0.01).epsilon(1e-15));
    sgd_momentum_step(w, g, state, 0.01, 0.9);
    // -lr * (1 + (1 + mu))
    CHECK(w[0][0] == doctest::Approx(-0.029).epsilon(1e-14));

    std::vector<Tensor> w2{Tensor({2}, 1.0)};
    auto s2 = OptimizerState::zeros_like(w2);
    s2.velocity[0].fill(2.0);
    sgd_momentum_step(w2, std::vector<Tensor>{Tensor({2})}, s2, 0.01, 0.9);
    CHECK(s2.velocity[0][0] == doctest::Approx(1.8));
    CHECK(w2[0][0] == doctest::Approx(1.0 - 0.01 * 0.9 * 2.0));

    CHECK(code_of([&] { sgd_momentum_step(w2, std::vector<Tensor>{Tensor({3})}, s2, 0.01, 0.9); }) ==
          ErrorCode::ShapeMismatch);
}

TEST_CASE("model layer shapes chain for l=20") {
    const Architecture arch;
    CHECK(arch.final_side() == 3);
    CHECK(arch.flattened_size() == 9 * 12);
    const Model m(arch);
    CHECK(m.parameters()[kConv1W].shape == std::vector<std::size_t>{6, 1, 5, 5});
    CHECK(m.parameters()[kConv2W].shape == std::vector<std::size_t>{12, 6, 3, 3});
    CHECK(m.parameters()[kFc1W].shape == std::vector<std::size_t>{64, 108});
    CHECK(m.parameters()[kFc2W].shape == std::vector<std::size_t>{4, 64});
    CHECK(code_of([] { Model(Architecture{21}); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([] { Model(Architecture{4}); }) == ErrorCode::ShapeMismatch);
    CHECK_NOTHROW(Model(Architecture{12}));
}

TEST_CASE("forward and predict") {
    std::mt19937_64 gen(7);
    const auto m = Model::initialized(Architecture{}, 3);
    const auto m2 = Model::initialized(Architecture{}, 3);
    CHECK(m == m2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto img = random_image(gen, 20);
        const auto p = m.forward(img);
        double s = 0.0;
        for (double v : p) s += v;
        CHECK(std::abs(s - 1.0) <= 1e-9);
        CHECK(p == m2.forward(img));
    }
    // zero parameters give uniform probabilities; the tie goes to class 0
    const Model zero(Architecture{});
    CHECK(zero.predict(random_image(gen, 20)) == 0);
    CHECK(code_of([&] { m.forward(random_image(gen, 12)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("weight initialization bounds") {
    const auto m = Model::initialized(Architecture{}, 11);
    const double conv1 = std::sqrt(6.0 / (25.0 + 6 * 25.0));
    for (double v : m.parameters()[kConv1W].data) CHECK(std::abs(v) <= conv1);
    const double fc1 = std::sqrt(6.0 / (108.0 + 64.0));
    for (double v : m.parameters()[kFc1W].data) CHECK(std::abs(v) <= fc1);
    for (std::size_t p : {kConv1B, kConv2B, kFc1B, kFc2B}) {
        for (double v : m.parameters()[p].data) CHECK(v == 0.0);
    }
}

TEST_CASE("grad_check") {
    std::mt19937_64 gen(8);
    const auto m = Model::initialized(Architecture{}, 21);
    const auto img = random_image(gen, 20);
    CHECK(grad_check(m, img.pixels, 2, 1e-5).max_relative_error < 1e-4);

    const auto corrupted =
        grad_check(m, img.pixels, 2, 1e-5, [](std::vector<Tensor>& g) {
            for (auto& v : g[kConv1B].data) v *= 2.0;
        });
    CHECK(corrupted.max_relative_error > 1e-2);
    CHECK(corrupted.worst_parameter == kConv1B);

    Model z = m;
    z.parameters()[kFc2W].fill(0.0);
    const auto degenerate = grad_check(z, std::vector<double>(400, 0.0), 0, 1e-5);
    CHECK(std::isfinite(degenerate.max_relative_error));

    CHECK(code_of([&] { grad_check(m, img.pixels, 0, 1e-2); }) == ErrorCode::InvalidArgument);
}

namespace {

/// Smallest |pre-activation| of the hidden ReLU layer; below ~1e-3 a central
/// difference can straddle the kink.
double kink_distance(const Model& m, std::span<const double> pixels) {
    const auto p = m.parameters();
    const Tensor x({1, m.architecture().input_side, m.architecture().input_side},
                   std::vector<double>(pixels.begin(), pixels.end()));
    const auto c1 = avgpool2_forward(conv2d_forward(x, p[kConv1W], p[kConv1B]));
    const auto c2 = avgpool2_forward(conv2d_forward(c1, p[kConv2W], p[kConv2B]));
    const auto z = dense_forward(Tensor({c2.size()}, c2.data), p[kFc1W], p[kFc1B], Activation::None);
    double d = std::numeric_limits<double>::infinity();
    for (double v : z.data) d = std::min(d, std::abs(v));
    return d;
}

/// Every seed either meets the relative bound or misses it for a known
/// numerical reason: differencing noise on a near-zero gradient (absolute gap
/// at roundoff level) or a ReLU kink inside the perturbation.
void check_seeds(std::uint64_t first, std::uint64_t last, std::uint64_t input_seed) {
    std::mt19937_64 gen(input_seed);
    std::size_t passed = 0, roundoff = 0, kinks = 0;
    for (std::uint64_t seed = first; seed < last; ++seed) {
        const auto m = Model::initialized(Architecture{}, seed);
        const auto img = random_image(gen, 20);
        const auto r = grad_check(m, img.pixels, seed % 4, 1e-5);
        if (r.max_relative_error < 1e-4) {
            ++passed;
        } else if (r.max_absolute_error < 1e-9) {
            ++roundoff;
        } else {
            INFO("seed " << seed << " rel " << r.max_relative_error << " abs " << r.max_absolute_error);
            CHECK(kink_distance(m, img.pixels) < 1e-3);
            ++kinks;
        }
    }
    MESSAGE("seeds " << first << ".." << last - 1 << ": " << passed << " under 1e-4, " << roundoff
                     << " roundoff-limited, " << kinks << " at a ReLU kink");
}

} // namespace

TEST_CASE("grad_check over ten seeds") { check_seeds(0, 10, 12); }

TEST_CASE("grad_check misses are explained over fifty seeds") { check_seeds(100, 150, 13); }

TEST_CASE("grad_check with max pooling") {
    std::mt19937_64 gen(9);
    Architecture arch;
    arch.pooling = Pooling::Max;
    const auto m = Model::initialized(arch, 4);
    CHECK(grad_check(m, random_image(gen, 20).pixels, 1, 1e-5).max_relative_error < 1e-4);
}

TEST_CASE("model serialization") {
    TempDir dir;
    std::mt19937_64 gen(10);
    const auto m = Model::initialized(Architecture{}, 5);
    save_model(m, dir / "m.vimg");
    const auto back = load_model(dir / "m.vimg");
    CHECK(back == m);
    for (int trial = 0; trial < 20; ++trial) {
        const auto img = random_image(gen, 20);
        const auto a = m.forward(img), b = back.forward(img);
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::bit_cast<std::uint64_t>(a[i]) == std::bit_cast<std::uint64_t>(b[i]));
    }

    const auto bytes = serialize_model(m);
    SUBCASE("bad magic") {
        auto b = bytes;
        b[0] = std::byte{'X'};
        CHECK(code_of([&] { deserialize_model(b); }) == ErrorCode::BadMagic);
    }
    SUBCASE("version") {
        auto b = bytes;
        b[4] = std::byte{2};
        CHECK(code_of([&] { deserialize_model(b); }) == ErrorCode::VersionMismatch);
    }
    SUBCASE("descriptor disagrees with the parameter blocks") {
        Architecture wide;
        wide.conv1_filters = 8;
        auto b = serialize_model(Model::initialized(wide, 1));
        b[12] = std::byte{6};  // conv1 field of the descriptor
        const auto code = code_of([&] { deserialize_model(b); });
        CHECK((code == ErrorCode::ArchitectureMismatch || code == ErrorCode::Truncated));
    }
    SUBCASE("truncated") {
        auto b = bytes;
        b.resize(b.size() - 3);
        CHECK(code_of([&] { deserialize_model(b); }) == ErrorCode::Truncated);
    }
    SUBCASE("trailing bytes") {
        auto b = bytes;
        b.push_back(std::byte{0});
        CHECK(code_of([&] { deserialize_model(b); }) == ErrorCode::ArchitectureMismatch);
    }
    SUBCASE("layout") {
        // 4 magic + 4 version + 6 descriptor + 1 count = 44 bytes of header
        std::size_t expected = 4 + 4 + 6 * 4 + 4;
        for (const auto& t : m.parameters()) expected += 8 + 8 * t.size();
        CHECK(bytes.size() == expected);
        CHECK(bytes[8] == std::byte{20});
    }
}

TEST_CASE("training is deterministic, finite and reduces the loss") {
    const auto data = generate_dataset(10, 20, 48000, 3);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 8;
    cfg.seed = 99;
    TrainHistory h1, h2;
    const auto a = train_new(data, cfg, &h1);
    const auto b = train_new(data, cfg, &h2);
    CHECK(a == b);
    CHECK(h1.epoch_loss == h2.epoch_loss);
    REQUIRE(h1.epoch_loss.size() == 15);
    for (double l : h1.epoch_loss) CHECK(std::isfinite(l));
    CHECK(h1.epoch_loss.back() < h1.epoch_loss.front());
    for (const auto& p : a.parameters()) CHECK(p.all_finite());

    cfg.seed = 100;
    CHECK_FALSE(train_new(data, cfg) == a);
}

TEST_CASE("capacity: 40 images are fit exactly within 150 epochs") {
    const auto data = generate_dataset(10, 20, 48000, 17);
    REQUIRE(data.size() == 40);
    TrainConfig cfg;  // defaults: 150 epochs, batch 50, lr 0.01, momentum 0.9
    cfg.seed = 1;
    Model model = Model::initialized(cfg.architecture(20), 1);
    std::size_t fitted_at = 0;
    train(model, data, cfg, [&](std::size_t epoch, double) {
        if (fitted_at) return;
        std::size_t correct = 0;
        for (const auto& img : data) correct += model.predict(img) == class_index(img.label);
        if (correct == data.size()) fitted_at = epoch + 1;
    });
    MESSAGE("training set fitted after epoch " << fitted_at);
    CHECK(fitted_at > 0);
}

TEST_CASE("TrainConfig validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.momentum = 1.0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
    cfg.momentum = 0.9;
    cfg.learning_rate = 0.0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
    cfg.learning_rate = 0.01;
    cfg.epochs = 0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
}
