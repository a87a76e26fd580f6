#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vibimg/model.hpp"
#include "vibimg/preprocess.hpp"
#include "vibimg/types.hpp"

namespace vibimg {

struct SplitSpec {
    double train_fraction = 5.0 / 6.0;
    std::uint64_t seed = 0;
    bool stratified = false;
    /// Split whole recordings (by meta id) instead of images.
    bool by_recording = false;

    void validate() const;
};

/// floor(n * fraction), robust to the fraction's binary rounding.
std::size_t train_count(std::size_t n, double fraction);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Default mode: Fisher-Yates permutation from Rng(spec.seed); the first
/// train_count(n) positions train, the rest test. Stratified mode does the
/// same per class (classes in index order, one Rng) and concatenates.
/// Throws DatasetTooSmall for fewer than 6 images or an empty side.
SplitIndices split_indices(std::span<const VibrationImage> images, const SplitSpec& spec);

struct SplitSets {
    std::vector<VibrationImage> train;
    std::vector<VibrationImage> test;
};

SplitSets split(std::span<const VibrationImage> images, const SplitSpec& spec);

/// Square count matrix indexed [actual][predicted].
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = kNumLocations) : classes_(classes), counts_(classes * classes) {}

    void add(std::size_t actual, std::size_t predicted) { ++counts_.at(actual * classes_ + predicted); }
    std::size_t at(std::size_t actual, std::size_t predicted) const { return counts_.at(actual * classes_ + predicted); }
    std::size_t classes() const { return classes_; }
    std::size_t row_total(std::size_t actual) const;
    std::size_t total() const;
    std::size_t correct() const;
    /// correct / total (0 for an empty matrix).
    double accuracy() const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t classes_;
    std::vector<std::size_t> counts_;
};

ConfusionMatrix evaluate(const Model& model, std::span<const VibrationImage> images);

/// Baseline rotation augmentation of the training split. Auto enables it when
/// the images span more than one non-zero fault size.
enum class Augmentation { Off, On, Auto };

std::string_view to_string(Augmentation mode);
bool augmentation_applies(std::span<const VibrationImage> images, Augmentation mode);

struct EvalResult {
    double accuracy = 0.0;
    ConfusionMatrix confusion;
    std::vector<double> loss_history;
    std::size_t n_train = 0;
    std::size_t n_train_augmented = 0;  // after balance_by_rotation
    std::size_t n_test = 0;
    std::vector<std::string> warnings;
};

using ProgressCallback = std::function<void(const std::string&)>;

/// Split, augment the training part if requested, train a fresh model and
/// score it on the test part.
EvalResult train_and_evaluate(std::span<const VibrationImage> images, const TrainConfig& train_cfg,
                              const SplitSpec& split_spec, Augmentation augment = Augmentation::Auto,
                              const EpochCallback& on_epoch = {});

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1)
};

/// Throws InvalidArgument for fewer than two values.
Summary summarize(std::span<const double> values);

struct ExperimentReport {
    std::string label;
    std::vector<double> run_accuracies;
    double mean = 0.0;
    double std = 0.0;
    std::size_t n_images = 0;
    std::vector<std::size_t> n_train_augmented;  // per run
    std::vector<ConfusionMatrix> confusions;     // per run
    TrainConfig train;
    SplitSpec split;
    Augmentation augment = Augmentation::Auto;
};

/// `runs` train/evaluate cycles. Run r uses split seed
/// derive_seed(split_spec.seed, r) and training seed derive_seed(train_cfg.seed, r).
/// Any failing run aborts the whole report. Throws InvalidArgument for runs < 2.
ExperimentReport run_repeated(std::span<const VibrationImage> images, const TrainConfig& train_cfg,
                              const SplitSpec& split_spec, std::size_t runs = 5,
                              Augmentation augment = Augmentation::Auto, std::string label = {},
                              const ProgressCallback& progress = {});

struct SweepRow {
    std::size_t factor = 1;
    double frequency_hz = 0.0;
    ExperimentReport report;
};

/// For each factor: decimate every recording, rebuild images at
/// `image.side`, run run_repeated. All recordings must share one sampling
/// rate; row labels are the resulting frequencies ("24,000 Hz").
std::vector<SweepRow> frequency_sweep(std::span<const RawRecording> recordings, std::span<const std::size_t> factors,
                                      const ImageOptions& image, const TrainConfig& train_cfg,
                                      const SplitSpec& split_spec, std::size_t runs = 5,
                                      Augmentation augment = Augmentation::Auto,
                                      const ProgressCallback& progress = {});

/// "48,000 Hz"; non-integral rates keep one decimal.
std::string format_frequency(double hz);

enum class ReportFormat { Csv, Markdown };

std::string_view to_string(ReportFormat format);
std::optional<ReportFormat> parse_report_format(std::string_view name);

/// Columns label, n, accuracy (percent, 1 decimal), std (percent, 1 decimal).
/// Throws InvalidArgument for an empty list.
std::string emit_report(std::span<const ExperimentReport> reports, ReportFormat format);

/// One row per run (run, accuracy percent) followed by a "mean" row that
/// also carries the std column.
std::string emit_runs(const ExperimentReport& report, ReportFormat format);

} // namespace vibimg
