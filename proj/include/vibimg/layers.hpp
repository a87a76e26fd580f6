#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vibimg/tensor.hpp"

namespace vibimg {

// Valid-padding, stride-1 cross-correlation (the kernel is not flipped):
//   out[k,y,x] = bias[k] + sum_{c,dy,dx} input[c,y+dy,x+dx] * weights[k,c,dy,dx]

/// input [C,H,W], weights [K,C,kh,kw], bias [K] -> [K, H-kh+1, W-kw+1].
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct Conv2dGradients {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

Conv2dGradients conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);

/// 2x2 mean, stride 2. Throws OddDimension.
Tensor avgpool2_forward(const Tensor& input);
/// Spreads each upstream value / 4 over its window.
Tensor avgpool2_backward(const Tensor& upstream);

/// 2x2 max, stride 2; `argmax` receives the flat input index of each winner
/// (first in row-major window order on ties).
Tensor maxpool2_forward(const Tensor& input, std::vector<std::size_t>& argmax);
Tensor maxpool2_backward(const Tensor& upstream, std::span<const std::size_t> argmax,
                         std::span<const std::size_t> input_shape);

enum class Activation { None, ReLU };

/// weights [M,N] times input [N] plus bias [M], then the activation.
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, Activation act);

struct DenseGradients {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

/// `output` is the forward result; the ReLU derivative is taken as 1 where
/// output > 0 and 0 elsewhere (so 0 at the kink).
DenseGradients dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output,
                              const Tensor& upstream, Activation act);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

struct LossAndGradient {
    double loss = 0.0;
    Tensor grad;  // d loss / d logits = softmax - onehot(label)
};

/// Cross entropy of softmax(logits) against `label`. Throws LabelOutOfRange.
LossAndGradient softmax_cross_entropy(const Tensor& logits, std::size_t label);

/// Velocity per parameter tensor, zero-initialized.
struct OptimizerState {
    std::vector<Tensor> velocity;

    static OptimizerState zeros_like(std::span<const Tensor> params);
};

/// Classical momentum: v <- mu * v + g; w <- w - lr * v.
/// Throws ShapeMismatch if params, grads and velocity disagree.
void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state,
                       double learning_rate, double momentum);

} // namespace vibimg
