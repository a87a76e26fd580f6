#include "vibimg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "vibimg/error.hpp"
#include "vibimg/rng.hpp"

namespace vibimg {

std::string_view to_string(Pooling pooling) { return pooling == Pooling::Average ? "avg" : "max"; }

std::size_t Architecture::final_side() const {
    if (input_side < 5) return 0;
    const std::size_t c1 = input_side - 4;
    const std::size_t p1 = c1 / 2;
    if (p1 < 3) return 0;
    return (p1 - 2) / 2;
}

void Architecture::validate() const {
    const auto fail = [](const std::string& msg) { throw Error(ErrorCode::ShapeMismatch, msg); };
    if (input_side < 5) fail("input side " + std::to_string(input_side) + " is smaller than the 5x5 kernel");
    const std::size_t c1 = input_side - 4;
    if (c1 % 2) fail("input side " + std::to_string(input_side) + " gives an odd first feature map");
    const std::size_t p1 = c1 / 2;
    if (p1 < 3) fail("first pooled map is smaller than the 3x3 kernel");
    const std::size_t c2 = p1 - 2;
    if (c2 % 2 || c2 == 0) fail("input side " + std::to_string(input_side) + " gives an odd second feature map");
    if (conv1_filters == 0 || conv2_filters == 0 || hidden == 0 || num_classes < 2) {
        fail("layer widths must be positive and num_classes at least 2");
    }
}

void TrainConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
    if (epochs < 1) fail("epochs must be at least 1");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
    if (num_classes < 2) fail("num_classes must be at least 2");
    if (conv1_filters == 0 || conv2_filters == 0 || hidden == 0) fail("layer widths must be positive");
}

Architecture TrainConfig::architecture(std::size_t input_side) const {
    return Architecture{input_side, conv1_filters, conv2_filters, hidden, num_classes, pooling};
}

std::string_view parameter_name(std::size_t index) {
    static constexpr std::string_view names[] = {"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
                                                 "fc1.weight",   "fc1.bias",   "fc2.weight",   "fc2.bias"};
    return index < kNumParams ? names[index] : "?";
}

Model::Model(const Architecture& arch) : arch_(arch) {
    arch_.validate();
    const std::size_t c1 = arch.conv1_filters, c2 = arch.conv2_filters;
    params_.resize(kNumParams);
    params_[kConv1W] = Tensor({c1, 1, 5, 5});
    params_[kConv1B] = Tensor({c1});
    params_[kConv2W] = Tensor({c2, c1, 3, 3});
    params_[kConv2B] = Tensor({c2});
    params_[kFc1W] = Tensor({arch.hidden, arch.flattened_size()});
    params_[kFc1B] = Tensor({arch.hidden});
    params_[kFc2W] = Tensor({arch.num_classes, arch.hidden});
    params_[kFc2B] = Tensor({arch.num_classes});
}

Model Model::initialized(const Architecture& arch, std::uint64_t seed) {
    Model m(arch);
    Rng rng(seed);
    for (std::size_t i : {kConv1W, kConv2W, kFc1W, kFc2W}) {
        auto& w = m.params_[i];
        std::size_t fan_in, fan_out;
        if (w.rank() == 4) {
            const std::size_t field = w.dim(2) * w.dim(3);
            fan_in = w.dim(1) * field;
            fan_out = w.dim(0) * field;
        } else {
            fan_in = w.dim(1);
            fan_out = w.dim(0);
        }
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : w.data) v = rng.uniform(-limit, limit);
    }
    return m;
}

namespace {

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    Tensor input, conv1, pool1, conv2, pool2, hidden, logits;
    std::vector<std::size_t> argmax1, argmax2;
};

Tensor pool_forward(Pooling kind, const Tensor& in, std::vector<std::size_t>& argmax) {
    return kind == Pooling::Average ? avgpool2_forward(in) : maxpool2_forward(in, argmax);
}

Tensor pool_backward(Pooling kind, const Tensor& up, std::span<const std::size_t> argmax, const Tensor& in) {
    return kind == Pooling::Average ? avgpool2_backward(up) : maxpool2_backward(up, argmax, in.shape);
}

Trace run_forward(const Architecture& arch, std::span<const Tensor> p, std::span<const double> pixels) {
    const std::size_t n = arch.input_side;
    if (pixels.size() != n * n) {
        throw Error(ErrorCode::ShapeMismatch, "model expects " + std::to_string(n) + "x" + std::to_string(n) +
                                                  " images, got " + std::to_string(pixels.size()) + " pixels");
    }
    Trace t;
    t.input = Tensor({1, n, n}, std::vector<double>(pixels.begin(), pixels.end()));
    t.conv1 = conv2d_forward(t.input, p[kConv1W], p[kConv1B]);
    t.pool1 = pool_forward(arch.pooling, t.conv1, t.argmax1);
    t.conv2 = conv2d_forward(t.pool1, p[kConv2W], p[kConv2B]);
    t.pool2 = pool_forward(arch.pooling, t.conv2, t.argmax2);
    Tensor flat({t.pool2.size()}, t.pool2.data);
    t.hidden = dense_forward(flat, p[kFc1W], p[kFc1B], Activation::ReLU);
    t.logits = dense_forward(t.hidden, p[kFc2W], p[kFc2B], Activation::None);
    return t;
}

void add_into(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

} // namespace

std::vector<double> Model::logits(std::span<const double> pixels) const {
    return run_forward(arch_, params_, pixels).logits.data;
}

std::vector<double> Model::forward(std::span<const double> pixels) const { return softmax(logits(pixels)); }

std::vector<double> Model::forward(const VibrationImage& image) const {
    if (image.side != arch_.input_side) {
        throw Error(ErrorCode::ShapeMismatch, "image side " + std::to_string(image.side) + ", model expects " +
                                                  std::to_string(arch_.input_side));
    }
    return forward(image.pixels);
}

std::size_t Model::predict(const VibrationImage& image) const {
    const auto probs = forward(image);
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<Tensor> Model::zero_gradients() const {
    std::vector<Tensor> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.emplace_back(p.shape);
    return g;
}

double Model::accumulate_gradient(std::span<const double> pixels, std::size_t label, std::vector<Tensor>& grads) const {
    if (grads.size() != params_.size()) throw Error(ErrorCode::ShapeMismatch, "gradient list size");
    const Trace t = run_forward(arch_, params_, pixels);
    const auto loss = softmax_cross_entropy(t.logits, label);

    const auto g_out = dense_backward(t.hidden, params_[kFc2W], t.logits, loss.grad, Activation::None);
    add_into(grads[kFc2W], g_out.weights);
    add_into(grads[kFc2B], g_out.bias);

    const Tensor flat({t.pool2.size()}, t.pool2.data);
    const auto g_hidden = dense_backward(flat, params_[kFc1W], t.hidden, g_out.input, Activation::ReLU);
    add_into(grads[kFc1W], g_hidden.weights);
    add_into(grads[kFc1B], g_hidden.bias);

    const Tensor g_pool2(t.pool2.shape, g_hidden.input.data);
    const Tensor g_conv2 = pool_backward(arch_.pooling, g_pool2, t.argmax2, t.conv2);
    const auto g_c2 = conv2d_backward(t.pool1, params_[kConv2W], g_conv2);
    add_into(grads[kConv2W], g_c2.weights);
    add_into(grads[kConv2B], g_c2.bias);

    const Tensor g_conv1 = pool_backward(arch_.pooling, g_c2.input, t.argmax1, t.conv1);
    const auto g_c1 = conv2d_backward(t.input, params_[kConv1W], g_conv1);
    add_into(grads[kConv1W], g_c1.weights);
    add_into(grads[kConv1B], g_c1.bias);
    return loss.loss;
}

TrainHistory train(Model& model, std::span<const VibrationImage> images, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
    cfg.validate();
    if (images.empty()) throw Error(ErrorCode::DatasetTooSmall, "no training images");
    const auto& arch = model.architecture();
    for (const auto& img : images) {
        if (img.side != arch.input_side) {
            throw Error(ErrorCode::ShapeMismatch, "training image side " + std::to_string(img.side) +
                                                      ", model expects " + std::to_string(arch.input_side));
        }
        if (class_index(img.label) >= arch.num_classes) {
            throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(class_index(img.label)));
        }
    }

    TrainHistory history;
    OptimizerState state = OptimizerState::zeros_like(model.parameters());
    std::vector<std::size_t> order(images.size());
    std::vector<Tensor> grads = model.zero_gradients();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, 1 + epoch));
        rng.shuffle(std::span(order));

        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            for (auto& g : grads) g.fill(0.0);
            for (std::size_t i = start; i < end; ++i) {
                const auto& img = images[order[i]];
                total += model.accumulate_gradient(img.pixels, class_index(img.label), grads);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto& g : grads) {
                for (auto& v : g.data) v *= scale;
            }
            sgd_momentum_step(model.parameters(), grads, state, cfg.learning_rate, cfg.momentum);
        }
        const double mean_loss = total / static_cast<double>(images.size());
        if (!std::isfinite(mean_loss)) {
            throw Error(ErrorCode::NumericalInstability, "training loss diverged at epoch " + std::to_string(epoch));
        }
        for (std::size_t p = 0; p < kNumParams; ++p) {
            if (!model.parameters()[p].all_finite()) {
                throw Error(ErrorCode::NumericalInstability, std::string(parameter_name(p)) +
                                                                 " became non-finite at epoch " +
                                                                 std::to_string(epoch));
            }
        }
        history.epoch_loss.push_back(mean_loss);
        if (on_epoch) on_epoch(epoch, mean_loss);
    }
    return history;
}

Model train_new(std::span<const VibrationImage> images, const TrainConfig& cfg, TrainHistory* history,
                const EpochCallback& on_epoch) {
    cfg.validate();
    if (images.empty()) throw Error(ErrorCode::DatasetTooSmall, "no training images");
    Model model = Model::initialized(cfg.architecture(images.front().side), derive_seed(cfg.seed, 0));
    auto h = train(model, images, cfg, on_epoch);
    if (history) *history = std::move(h);
    return model;
}

GradCheckResult grad_check(const Model& model, std::span<const double> pixels, std::size_t label, double epsilon,
                           const GradientHook& hook) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
        throw Error(ErrorCode::InvalidArgument, "epsilon must lie in [1e-7, 1e-3]");
    }
    auto analytic = model.zero_gradients();
    model.accumulate_gradient(pixels, label, analytic);
    if (hook) hook(analytic);

    Model probe = model;
    const auto loss_at = [&] {
        return softmax_cross_entropy(Tensor({probe.architecture().num_classes}, probe.logits(pixels)), label).loss;
    };

    GradCheckResult result;
    for (std::size_t p = 0; p < kNumParams; ++p) {
        auto& values = probe.parameters()[p].data;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + epsilon;
            const double up = loss_at();
            values[i] = saved - epsilon;
            const double down = loss_at();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = analytic[p].data[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
            double rel = std::abs(a - numeric) / denom;
            if (std::isnan(rel)) rel = std::numeric_limits<double>::infinity();
            const double abs_err = std::abs(a - numeric);
            result.max_absolute_error =
                std::isnan(abs_err) ? std::numeric_limits<double>::infinity() : std::max(result.max_absolute_error, abs_err);
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_parameter = p;
                result.worst_element = i;
            }
        }
    }
    return result;
}

namespace {

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i, v >>= 8) out.push_back(static_cast<std::byte>(v & 0xFF));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i, v >>= 8) out.push_back(static_cast<std::byte>(v & 0xFF));
}

class Cursor {
public:
    explicit Cursor(std::span<const std::byte> bytes) : bytes_(bytes) {}

    std::uint64_t take(std::size_t width) {
        if (bytes_.size() - pos_ < width) {
            throw Error(ErrorCode::Truncated, "model file ends at byte " + std::to_string(bytes_.size()) +
                                                  ", needed " + std::to_string(pos_ + width));
        }
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += width;
        return v;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
    std::uint64_t u64() { return take(8); }
    double f64() { return std::bit_cast<double>(take(8)); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::byte> serialize_model(const Model& model) {
    std::vector<std::byte> out;
    for (char c : {'V', 'I', 'M', 'G'}) out.push_back(static_cast<std::byte>(c));
    put_u32(out, kModelFormatVersion);
    const auto& a = model.architecture();
    put_u32(out, static_cast<std::uint32_t>(a.input_side));
    put_u32(out, static_cast<std::uint32_t>(a.conv1_filters));
    put_u32(out, static_cast<std::uint32_t>(a.conv2_filters));
    put_u32(out, static_cast<std::uint32_t>(a.hidden));
    put_u32(out, static_cast<std::uint32_t>(a.num_classes));
    put_u32(out, a.pooling == Pooling::Average ? 0 : 1);
    put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& t : model.parameters()) {
        put_u64(out, t.size());
        for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Model deserialize_model(std::span<const std::byte> bytes) {
    if (bytes.size() < 4 || static_cast<char>(bytes[0]) != 'V' || static_cast<char>(bytes[1]) != 'I' ||
        static_cast<char>(bytes[2]) != 'M' || static_cast<char>(bytes[3]) != 'G') {
        throw Error(ErrorCode::BadMagic, "not a model file (magic is not 'VIMG')");
    }
    Cursor in(bytes.subspan(4));
    const auto version = in.u32();
    if (version != kModelFormatVersion) {
        throw Error(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) + ", expected " +
                                                    std::to_string(kModelFormatVersion));
    }
    Architecture arch;
    arch.input_side = in.u32();
    arch.conv1_filters = in.u32();
    arch.conv2_filters = in.u32();
    arch.hidden = in.u32();
    arch.num_classes = in.u32();
    const auto pooling = in.u32();
    if (pooling > 1) throw Error(ErrorCode::ArchitectureMismatch, "unknown pooling code " + std::to_string(pooling));
    arch.pooling = pooling == 0 ? Pooling::Average : Pooling::Max;
    try {
        arch.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ArchitectureMismatch, e.what());
    }
    Model model(arch);
    const auto count = in.u32();
    if (count != model.parameters().size()) {
        throw Error(ErrorCode::ArchitectureMismatch,
                    "file holds " + std::to_string(count) + " tensors, architecture has " +
                        std::to_string(model.parameters().size()));
    }
    for (std::size_t p = 0; p < count; ++p) {
        auto& t = model.parameters()[p];
        const auto n = in.u64();
        if (n != t.size()) {
            throw Error(ErrorCode::ArchitectureMismatch,
                        std::string(parameter_name(p)) + " block holds " + std::to_string(n) +
                            " values, descriptor implies " + std::to_string(t.size()));
        }
        for (auto& v : t.data) v = in.f64();
    }
    if (in.remaining() != 0) {
        throw Error(ErrorCode::ArchitectureMismatch, std::to_string(in.remaining()) + " trailing bytes");
    }
    return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
    const auto bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(std::as_bytes(std::span(raw)));
}

} // namespace vibimg
