#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vibimg/layers.hpp"
#include "vibimg/preprocess.hpp"
#include "vibimg/tensor.hpp"

namespace vibimg {

enum class Pooling { Average, Max };

std::string_view to_string(Pooling pooling);

/// conv 5x5 -> pool 2x2 -> conv 3x3 -> pool 2x2 -> dense+ReLU -> dense+softmax.
/// The convolutions have no activation of their own.
struct Architecture {
    std::size_t input_side = 20;
    std::size_t conv1_filters = 6;
    std::size_t conv2_filters = 12;
    std::size_t hidden = 64;
    std::size_t num_classes = 4;
    Pooling pooling = Pooling::Average;

    /// Side after the second pooling layer (3 for a 20x20 input).
    std::size_t final_side() const;
    std::size_t flattened_size() const { return final_side() * final_side() * conv2_filters; }

    /// Throws ShapeMismatch unless every layer's input shape is valid.
    void validate() const;

    bool operator==(const Architecture&) const = default;
};

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 50;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    std::size_t num_classes = 4;
    std::size_t conv1_filters = 6;
    std::size_t conv2_filters = 12;
    std::size_t hidden = 64;
    Pooling pooling = Pooling::Average;

    /// Throws InvalidConfig if a field is out of range.
    void validate() const;
    Architecture architecture(std::size_t input_side) const;
};

/// Parameter tensors, in this order.
enum ParamIndex : std::size_t { kConv1W, kConv1B, kConv2W, kConv2B, kFc1W, kFc1B, kFc2W, kFc2B, kNumParams };

std::string_view parameter_name(std::size_t index);

class Model {
public:
    /// All parameters zero.
    explicit Model(const Architecture& arch);

    /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    static Model initialized(const Architecture& arch, std::uint64_t seed);

    const Architecture& architecture() const { return arch_; }
    std::span<Tensor> parameters() { return params_; }
    std::span<const Tensor> parameters() const { return params_; }

    std::vector<double> logits(std::span<const double> pixels) const;
    std::vector<double> forward(std::span<const double> pixels) const;
    /// Class probabilities. Throws ShapeMismatch on a side mismatch.
    std::vector<double> forward(const VibrationImage& image) const;
    /// Argmax of forward; the lowest index wins ties.
    std::size_t predict(const VibrationImage& image) const;

    /// Cross-entropy loss of one example; adds its parameter gradients to
    /// `grads` (which must be shaped like parameters()).
    double accumulate_gradient(std::span<const double> pixels, std::size_t label, std::vector<Tensor>& grads) const;

    std::vector<Tensor> zero_gradients() const;

    bool operator==(const Model& other) const = default;

private:
    Architecture arch_;
    std::vector<Tensor> params_;
};

struct TrainHistory {
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Mini-batch SGD with momentum. Each epoch reshuffles with an Rng seeded by
/// derive_seed(cfg.seed, 1 + epoch); the last partial batch is kept and every
/// batch gradient is the mean over its examples. Throws NumericalInstability
/// if a loss or parameter becomes non-finite.
TrainHistory train(Model& model, std::span<const VibrationImage> images, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

/// Fresh model for `cfg` (seeded with derive_seed(cfg.seed, 0)) trained on `images`.
Model train_new(std::span<const VibrationImage> images, const TrainConfig& cfg, TrainHistory* history = nullptr,
                const EpochCallback& on_epoch = {});

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_parameter = 0;  // ParamIndex
    std::size_t worst_element = 0;
    double max_absolute_error = 0.0;  // max |a - n| over all elements
};

/// Lets tests tamper with the analytic gradients before comparison.
using GradientHook = std::function<void(std::vector<Tensor>&)>;

/// Compares the analytic gradient of every parameter with central
/// differences of step `epsilon`, relative error |a-n| / max(|a|,|n|,1e-12).
/// Throws InvalidArgument unless epsilon is in [1e-7, 1e-3].
GradCheckResult grad_check(const Model& model, std::span<const double> pixels, std::size_t label, double epsilon,
                           const GradientHook& hook = {});

/// Binary layout, all integers and floats little-endian:
///   "VIMG" | u32 version (1) | u32 input_side, conv1, conv2, hidden,
///   num_classes, pooling (0 average, 1 max) | u32 tensor count |
///   per tensor: u64 element count, then that many binary64 values.
void save_model(const Model& model, const std::filesystem::path& path);
std::vector<std::byte> serialize_model(const Model& model);

/// Throws BadMagic, VersionMismatch, ArchitectureMismatch or Truncated.
Model load_model(const std::filesystem::path& path);
Model deserialize_model(std::span<const std::byte> bytes);

inline constexpr std::uint32_t kModelFormatVersion = 1;

} // namespace vibimg
