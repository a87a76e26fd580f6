#include "vibimg/layers.hpp"

#include <algorithm>
#include <cmath>

#include "vibimg/error.hpp"

namespace vibimg {
namespace {

[[noreturn]] void shape_error(const std::string& what) { throw Error(ErrorCode::ShapeMismatch, what); }

void check_conv_shapes(const Tensor& input, const Tensor& weights) {
    if (input.rank() != 3) shape_error("conv input must be [C,H,W], got " + shape_string(input.shape));
    if (weights.rank() != 4) shape_error("conv weights must be [K,C,kh,kw], got " + shape_string(weights.shape));
    if (weights.dim(1) != input.dim(0)) {
        shape_error("conv weights expect " + std::to_string(weights.dim(1)) + " channels, input has " +
                    std::to_string(input.dim(0)));
    }
    if (input.dim(1) < weights.dim(2) || input.dim(2) < weights.dim(3)) {
        shape_error("conv input " + shape_string(input.shape) + " smaller than kernel " +
                    shape_string(weights.shape));
    }
}

void check_pool_input(const Tensor& input) {
    if (input.rank() != 3) shape_error("pool input must be [C,H,W], got " + shape_string(input.shape));
    if (input.dim(1) % 2 != 0 || input.dim(2) % 2 != 0) {
        throw Error(ErrorCode::OddDimension, "pool input " + shape_string(input.shape) + " has an odd side");
    }
}

} // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    check_conv_shapes(input, weights);
    const std::size_t K = weights.dim(0), C = weights.dim(1), kh = weights.dim(2), kw = weights.dim(3);
    const std::size_t H = input.dim(1), W = input.dim(2);
    if (bias.rank() != 1 || bias.dim(0) != K) shape_error("conv bias must be [" + std::to_string(K) + "]");
    const std::size_t oh = H - kh + 1, ow = W - kw + 1;

    Tensor out({K, oh, ow});
    for (std::size_t k = 0; k < K; ++k) {
        double* o = &out.data[k * oh * ow];
        std::fill(o, o + oh * ow, bias[k]);
        for (std::size_t c = 0; c < C; ++c) {
            const double* in = &input.data[c * H * W];
            const double* w = &weights.data[((k * C) + c) * kh * kw];
            for (std::size_t dy = 0; dy < kh; ++dy) {
                for (std::size_t dx = 0; dx < kw; ++dx) {
                    const double wv = w[dy * kw + dx];
                    for (std::size_t y = 0; y < oh; ++y) {
                        const double* row = in + (y + dy) * W + dx;
                        double* orow = o + y * ow;
                        for (std::size_t x = 0; x < ow; ++x) orow[x] += wv * row[x];
                    }
                }
            }
        }
    }
    return out;
}

Conv2dGradients conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
    check_conv_shapes(input, weights);
    const std::size_t K = weights.dim(0), C = weights.dim(1), kh = weights.dim(2), kw = weights.dim(3);
    const std::size_t H = input.dim(1), W = input.dim(2);
    const std::size_t oh = H - kh + 1, ow = W - kw + 1;
    if (upstream.shape != std::vector<std::size_t>{K, oh, ow}) {
        shape_error("conv upstream gradient " + shape_string(upstream.shape) + ", expected " +
                    shape_string(std::vector<std::size_t>{K, oh, ow}));
    }

    Conv2dGradients g{Tensor(input.shape), Tensor(weights.shape), Tensor({K})};
    for (std::size_t k = 0; k < K; ++k) {
        const double* up = &upstream.data[k * oh * ow];
        double bsum = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) bsum += up[i];
        g.bias[k] = bsum;
        for (std::size_t c = 0; c < C; ++c) {
            const double* in = &input.data[c * H * W];
            double* gin = &g.input.data[c * H * W];
            const double* w = &weights.data[((k * C) + c) * kh * kw];
            double* gw = &g.weights.data[((k * C) + c) * kh * kw];
            for (std::size_t dy = 0; dy < kh; ++dy) {
                for (std::size_t dx = 0; dx < kw; ++dx) {
                    const double wv = w[dy * kw + dx];
                    double acc = 0.0;
                    for (std::size_t y = 0; y < oh; ++y) {
                        const double* row = in + (y + dy) * W + dx;
                        double* grow = gin + (y + dy) * W + dx;
                        const double* urow = up + y * ow;
                        for (std::size_t x = 0; x < ow; ++x) {
                            acc += urow[x] * row[x];
                            grow[x] += urow[x] * wv;
                        }
                    }
                    gw[dy * kw + dx] = acc;
                }
            }
        }
    }
    return g;
}

Tensor avgpool2_forward(const Tensor& input) {
    check_pool_input(input);
    const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const std::size_t oh = H / 2, ow = W / 2;
    Tensor out({C, oh, ow});
    for (std::size_t c = 0; c < C; ++c) {
        const double* in = &input.data[c * H * W];
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const double* p = in + 2 * y * W + 2 * x;
                out.data[(c * oh + y) * ow + x] = 0.25 * (p[0] + p[1] + p[W] + p[W + 1]);
            }
        }
    }
    return out;
}

Tensor avgpool2_backward(const Tensor& upstream) {
    if (upstream.rank() != 3) shape_error("pool gradient must be [C,H,W], got " + shape_string(upstream.shape));
    const std::size_t C = upstream.dim(0), oh = upstream.dim(1), ow = upstream.dim(2);
    const std::size_t W = 2 * ow;
    Tensor g({C, 2 * oh, W});
    for (std::size_t c = 0; c < C; ++c) {
        double* gin = &g.data[c * 2 * oh * W];
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const double v = 0.25 * upstream.data[(c * oh + y) * ow + x];
                double* p = gin + 2 * y * W + 2 * x;
                p[0] = v;
                p[1] = v;
                p[W] = v;
                p[W + 1] = v;
            }
        }
    }
    return g;
}

Tensor maxpool2_forward(const Tensor& input, std::vector<std::size_t>& argmax) {
    check_pool_input(input);
    const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const std::size_t oh = H / 2, ow = W / 2;
    Tensor out({C, oh, ow});
    argmax.assign(out.size(), 0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const std::size_t base = c * H * W + 2 * y * W + 2 * x;
                const std::size_t cand[4] = {base, base + 1, base + W, base + W + 1};
                std::size_t best = cand[0];
                for (std::size_t i = 1; i < 4; ++i) {
                    if (input.data[cand[i]] > input.data[best]) best = cand[i];
                }
                const std::size_t o = (c * oh + y) * ow + x;
                out.data[o] = input.data[best];
                argmax[o] = best;
            }
        }
    }
    return out;
}

Tensor maxpool2_backward(const Tensor& upstream, std::span<const std::size_t> argmax,
                         std::span<const std::size_t> input_shape) {
    if (argmax.size() != upstream.size()) shape_error("maxpool argmax does not match the upstream gradient");
    Tensor g(std::vector<std::size_t>(input_shape.begin(), input_shape.end()));
    for (std::size_t i = 0; i < upstream.size(); ++i) g.data.at(argmax[i]) += upstream.data[i];
    return g;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, Activation act) {
    if (weights.rank() != 2 || weights.dim(1) != input.size()) {
        shape_error("dense weights " + shape_string(weights.shape) + " do not accept " +
                    std::to_string(input.size()) + " inputs");
    }
    const std::size_t M = weights.dim(0), N = weights.dim(1);
    if (bias.size() != M) shape_error("dense bias must have " + std::to_string(M) + " entries");
    Tensor out({M});
    for (std::size_t m = 0; m < M; ++m) {
        const double* w = &weights.data[m * N];
        double acc = bias[m];
        for (std::size_t n = 0; n < N; ++n) acc += w[n] * input.data[n];
        out[m] = (act == Activation::ReLU && acc < 0.0) ? 0.0 : acc;
    }
    return out;
}

DenseGradients dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output,
                              const Tensor& upstream, Activation act) {
    if (weights.rank() != 2 || weights.dim(1) != input.size()) {
        shape_error("dense weights " + shape_string(weights.shape) + " do not accept " +
                    std::to_string(input.size()) + " inputs");
    }
    const std::size_t M = weights.dim(0), N = weights.dim(1);
    if (output.size() != M || upstream.size() != M) {
        shape_error("dense gradient must have " + std::to_string(M) + " entries");
    }
    DenseGradients g{Tensor(input.shape), Tensor(weights.shape), Tensor({M})};
    for (std::size_t m = 0; m < M; ++m) {
        double d = upstream[m];
        if (act == Activation::ReLU && !(output[m] > 0.0)) d = 0.0;
        g.bias[m] = d;
        if (d == 0.0) continue;
        const double* w = &weights.data[m * N];
        double* gw = &g.weights.data[m * N];
        for (std::size_t n = 0; n < N; ++n) {
            gw[n] = d * input.data[n];
            g.input.data[n] += d * w[n];
        }
    }
    return g;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (auto& v : p) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

LossAndGradient softmax_cross_entropy(const Tensor& logits, std::size_t label) {
    if (label >= logits.size()) {
        throw Error(ErrorCode::LabelOutOfRange,
                    "label " + std::to_string(label) + " with " + std::to_string(logits.size()) + " classes");
    }
    const double mx = *std::max_element(logits.data.begin(), logits.data.end());
    double sum = 0.0;
    for (double v : logits.data) sum += std::exp(v - mx);
    const double log_sum = std::log(sum);

    LossAndGradient out;
    out.loss = -(logits[label] - mx - log_sum);
    out.grad = Tensor(logits.shape);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.grad[i] = std::exp(logits[i] - mx - log_sum) - (i == label ? 1.0 : 0.0);
    }
    return out;
}

OptimizerState OptimizerState::zeros_like(std::span<const Tensor> params) {
    OptimizerState s;
    s.velocity.reserve(params.size());
    for (const auto& p : params) s.velocity.emplace_back(p.shape);
    return s;
}

void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state,
                       double learning_rate, double momentum) {
    if (params.size() != grads.size() || params.size() != state.velocity.size()) {
        shape_error("optimizer: " + std::to_string(params.size()) + " parameters, " +
                    std::to_string(grads.size()) + " gradients, " + std::to_string(state.velocity.size()) +
                    " velocities");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        require_same_shape(params[t], grads[t], "optimizer gradient");
        require_same_shape(params[t], state.velocity[t], "optimizer velocity");
        auto& w = params[t].data;
        auto& v = state.velocity[t].data;
        const auto& g = grads[t].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = momentum * v[i] + g[i];
            w[i] -= learning_rate * v[i];
        }
    }
}

} // namespace vibimg
