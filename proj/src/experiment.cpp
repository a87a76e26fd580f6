#include "vibimg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "vibimg/error.hpp"
#include "vibimg/rng.hpp"

namespace vibimg {

void SplitSpec::validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "train_fraction must lie strictly between 0 and 1");
    }
}

std::size_t train_count(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
}

namespace {

void take_split(std::vector<std::size_t> pool, double fraction, Rng& rng, SplitIndices& out) {
    rng.shuffle(std::span(pool));
    const std::size_t k = train_count(pool.size(), fraction);
    out.train.insert(out.train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    out.test.insert(out.test.end(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end());
}

} // namespace

SplitIndices split_indices(std::span<const VibrationImage> images, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = images.size();
    if (n < 6) throw Error(ErrorCode::DatasetTooSmall, std::to_string(n) + " images, need at least 6");
    Rng rng(spec.seed);
    SplitIndices out;

    if (spec.by_recording) {
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < n; ++i) {
            if (!images[i].meta) {
                throw Error(ErrorCode::InvalidArgument, "per-recording split needs recording metadata on every image");
            }
            groups[images[i].meta->id].push_back(i);
        }
        std::vector<const std::vector<std::size_t>*> order;
        for (const auto& [id, idx] : groups) order.push_back(&idx);
        rng.shuffle(std::span(order));
        const std::size_t k = train_count(order.size(), spec.train_fraction);
        for (std::size_t g = 0; g < order.size(); ++g) {
            auto& dst = g < k ? out.train : out.test;
            dst.insert(dst.end(), order[g]->begin(), order[g]->end());
        }
    } else if (spec.stratified) {
        std::vector<std::vector<std::size_t>> per_class(kNumLocations);
        for (std::size_t i = 0; i < n; ++i) per_class[class_index(images[i].label)].push_back(i);
        for (auto& idx : per_class) take_split(std::move(idx), spec.train_fraction, rng, out);
    } else {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        take_split(std::move(all), spec.train_fraction, rng, out);
    }
    if (out.train.empty() || out.test.empty()) {
        throw Error(ErrorCode::DatasetTooSmall, "split leaves " + std::to_string(out.train.size()) + " train / " +
                                                    std::to_string(out.test.size()) + " test images");
    }
    return out;
}

SplitSets split(std::span<const VibrationImage> images, const SplitSpec& spec) {
    const auto idx = split_indices(images, spec);
    SplitSets sets;
    sets.train.reserve(idx.train.size());
    sets.test.reserve(idx.test.size());
    for (auto i : idx.train) sets.train.push_back(images[i]);
    for (auto i : idx.test) sets.test.push_back(images[i]);
    return sets;
}

std::size_t ConfusionMatrix::row_total(std::size_t actual) const {
    std::size_t s = 0;
    for (std::size_t p = 0; p < classes_; ++p) s += at(actual, p);
    return s;
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::correct() const {
    std::size_t s = 0;
    for (std::size_t c = 0; c < classes_; ++c) s += at(c, c);
    return s;
}

double ConfusionMatrix::accuracy() const {
    const auto t = total();
    return t == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(t);
}

ConfusionMatrix evaluate(const Model& model, std::span<const VibrationImage> images) {
    ConfusionMatrix cm(model.architecture().num_classes);
    for (const auto& img : images) cm.add(class_index(img.label), model.predict(img));
    return cm;
}

std::string_view to_string(Augmentation mode) {
    switch (mode) {
    case Augmentation::Off: return "off";
    case Augmentation::On: return "on";
    case Augmentation::Auto: return "auto";
    }
    return "?";
}

bool augmentation_applies(std::span<const VibrationImage> images, Augmentation mode) {
    if (mode != Augmentation::Auto) return mode == Augmentation::On;
    std::set<int> sizes;
    for (const auto& img : images) {
        if (img.meta && img.meta->fault_size_mils > 0) sizes.insert(img.meta->fault_size_mils);
    }
    return sizes.size() > 1;
}

EvalResult train_and_evaluate(std::span<const VibrationImage> images, const TrainConfig& train_cfg,
                              const SplitSpec& split_spec, Augmentation augment, const EpochCallback& on_epoch) {
    train_cfg.validate();
    auto sets = split(images, split_spec);

    EvalResult result;
    result.n_train = sets.train.size();
    result.n_test = sets.test.size();
    if (augmentation_applies(images, augment)) {
        const bool has_baseline = std::any_of(sets.train.begin(), sets.train.end(),
                                              [](const auto& img) { return img.label == FaultLocation::Baseline; });
        if (has_baseline) {
            auto balanced = balance_by_rotation(std::move(sets.train), FaultLocation::Baseline);
            sets.train = std::move(balanced.images);
            result.warnings = std::move(balanced.warnings);
        } else {
            result.warnings.push_back("augmentation requested but the training split has no Baseline images");
        }
    }
    result.n_train_augmented = sets.train.size();

    TrainHistory history;
    const Model model = train_new(sets.train, train_cfg, &history, on_epoch);
    result.loss_history = std::move(history.epoch_loss);
    result.confusion = evaluate(model, sets.test);
    result.accuracy = result.confusion.accuracy();
    return result;
}

Summary summarize(std::span<const double> values) {
    if (values.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two values for a sample std");
    Summary s;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
    return s;
}

ExperimentReport run_repeated(std::span<const VibrationImage> images, const TrainConfig& train_cfg,
                              const SplitSpec& split_spec, std::size_t runs, Augmentation augment, std::string label,
                              const ProgressCallback& progress) {
    if (runs < 2) throw Error(ErrorCode::InvalidArgument, "run_repeated needs at least 2 runs");
    train_cfg.validate();
    split_spec.validate();

    ExperimentReport report;
    report.label = std::move(label);
    report.n_images = images.size();
    report.train = train_cfg;
    report.split = split_spec;
    report.augment = augment;
    for (std::size_t r = 0; r < runs; ++r) {
        TrainConfig tc = train_cfg;
        tc.seed = derive_seed(train_cfg.seed, r);
        SplitSpec sc = split_spec;
        sc.seed = derive_seed(split_spec.seed, r);
        const auto result = train_and_evaluate(images, tc, sc, augment);
        report.run_accuracies.push_back(result.accuracy);
        report.n_train_augmented.push_back(result.n_train_augmented);
        report.confusions.push_back(result.confusion);
        if (progress) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "run %zu/%zu: accuracy %.4f", r + 1, runs, result.accuracy);
            progress(report.label.empty() ? std::string(buf) : report.label + ": " + buf);
        }
    }
    const auto s = summarize(report.run_accuracies);
    report.mean = s.mean;
    report.std = s.std;
    return report;
}

std::string format_frequency(double hz) {
    const double rounded = std::round(hz);
    std::string frac;
    if (std::abs(hz - rounded) > 1e-6) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.1f", hz - std::floor(hz));
        frac = buf + 1;  // ".5"
    }
    auto whole = static_cast<long long>(frac.empty() ? rounded : std::floor(hz));
    std::string digits = std::to_string(whole);
    std::string grouped;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0) grouped += ',';
        grouped += digits[i];
    }
    return grouped + frac + " Hz";
}

std::vector<SweepRow> frequency_sweep(std::span<const RawRecording> recordings, std::span<const std::size_t> factors,
                                      const ImageOptions& image, const TrainConfig& train_cfg,
                                      const SplitSpec& split_spec, std::size_t runs, Augmentation augment,
                                      const ProgressCallback& progress) {
    if (recordings.empty()) throw Error(ErrorCode::DatasetTooSmall, "no recordings to sweep");
    if (factors.empty()) throw Error(ErrorCode::InvalidArgument, "no decimation factors");
    const double rate = recordings.front().meta.sampling_rate_hz;
    for (const auto& rec : recordings) {
        if (rec.meta.sampling_rate_hz != rate) {
            throw Error(ErrorCode::InvalidArgument, "recording '" + rec.meta.id + "' is sampled at " +
                                                        std::to_string(rec.meta.sampling_rate_hz) + " Hz, expected " +
                                                        std::to_string(rate) + " Hz");
        }
    }
    std::vector<SweepRow> rows;
    for (std::size_t factor : factors) {
        ImageOptions opts = image;
        opts.decimation = factor;
        std::vector<VibrationImage> images;
        for (const auto& rec : recordings) {
            auto imgs = build_images(rec, opts);
            std::move(imgs.begin(), imgs.end(), std::back_inserter(images));
        }
        SweepRow row;
        row.factor = factor;
        row.frequency_hz = rate / static_cast<double>(factor);
        row.report = run_repeated(images, train_cfg, split_spec, runs, augment, format_frequency(row.frequency_hz),
                                  progress);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string_view to_string(ReportFormat format) { return format == ReportFormat::Csv ? "csv" : "markdown"; }

std::optional<ReportFormat> parse_report_format(std::string_view name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "markdown" || name == "md") return ReportFormat::Markdown;
    return std::nullopt;
}

namespace {

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string md_cell(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += '\\';
        out += c;
    }
    return out;
}

} // namespace

std::string emit_report(std::span<const ExperimentReport> reports, ReportFormat format) {
    if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "no reports to emit");
    std::string out;
    if (format == ReportFormat::Csv) {
        out = "label,n,accuracy,std\n";
        for (const auto& r : reports) {
            out += csv_field(r.label) + "," + std::to_string(r.n_images) + "," + percent(r.mean) + "," +
                   percent(r.std) + "\n";
        }
    } else {
        out = "| label | n | accuracy | std |\n|---|---:|---:|---:|\n";
        for (const auto& r : reports) {
            out += "| " + md_cell(r.label) + " | " + std::to_string(r.n_images) + " | " + percent(r.mean) + " | " +
                   percent(r.std) + " |\n";
        }
    }
    return out;
}

std::string emit_runs(const ExperimentReport& report, ReportFormat format) {
    const bool csv = format == ReportFormat::Csv;
    const auto row = [csv](const std::string& a, const std::string& b, const std::string& c) {
        return csv ? a + "," + b + "," + c + "\n" : "| " + a + " | " + b + " | " + c + " |\n";
    };
    std::string out = csv ? "run,accuracy,std\n" : "| run | accuracy | std |\n|---|---:|---:|\n";
    for (std::size_t r = 0; r < report.run_accuracies.size(); ++r) {
        out += row(std::to_string(r + 1), percent(report.run_accuracies[r]), "");
    }
    out += row("mean", percent(report.mean), percent(report.std));
    return out;
}

} // namespace vibimg
