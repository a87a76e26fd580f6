#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>

#include <CLI11.hpp>

#include "vibimg/error.hpp"
#include "vibimg/experiment.hpp"
#include "vibimg/model.hpp"
#include "vibimg/rng.hpp"
#include "vibimg/run_config.hpp"
#include "vibimg/signal_io.hpp"
#include "vibimg/synthgen.hpp"

namespace fs = std::filesystem;
using namespace vibimg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitGradcheck = 3;

constexpr double kGradTolerance = 1e-4;

// Flags that override config-file values when given.
struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> format;
    std::optional<std::string> manifest;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<double> momentum;
    std::optional<std::size_t> runs;
    std::optional<std::size_t> l;
    std::optional<std::size_t> decimation;
    std::optional<std::string> augment;
    std::optional<std::string> pooling;
    std::optional<std::vector<std::size_t>> factors;
    std::optional<std::size_t> per_class;
    std::optional<double> fs_hz;
    std::optional<std::string> model;
    std::optional<std::string> loss_log;
};

RunConfig resolve(const Overrides& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out = *o.out;
    if (o.format) cfg.format = *o.format;
    if (o.manifest) cfg.manifest = *o.manifest;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.batch_size) cfg.batch_size = *o.batch_size;
    if (o.learning_rate) cfg.learning_rate = *o.learning_rate;
    if (o.momentum) cfg.momentum = *o.momentum;
    if (o.runs) cfg.runs = *o.runs;
    if (o.l) cfg.l = *o.l;
    if (o.decimation) cfg.decimation_factor = *o.decimation;
    if (o.augment) cfg.augment = *o.augment;
    if (o.pooling) cfg.pooling = *o.pooling;
    if (o.factors) cfg.factors = *o.factors;
    if (o.per_class) cfg.synth_per_class = *o.per_class;
    if (o.fs_hz) cfg.synth_fs_hz = *o.fs_hz;
    if (o.model) cfg.model = *o.model;
    if (o.loss_log) cfg.loss_log = *o.loss_log;
    validate(cfg);
    return cfg;
}

void progress(const std::string& msg) { std::cerr << msg << "\n"; }

/// Writes `text` to cfg.out if set, else stdout.
void emit(const RunConfig& cfg, const std::string& text) {
    if (cfg.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(cfg.out);
    if (!f) throw Error(ErrorCode::Io, "cannot write '" + cfg.out + "'");
    f << text;
    if (!f) throw Error(ErrorCode::Io, "write failed for '" + cfg.out + "'");
    std::cerr << "wrote " << cfg.out << "\n";
}

std::string confusion_text(const ConfusionMatrix& m) {
    std::ostringstream os;
    os << "actual\\predicted";
    for (auto loc : kAllLocations) os << "," << to_string(loc);
    os << "\n";
    for (std::size_t a = 0; a < m.classes(); ++a) {
        os << to_string(location_from_index(a));
        for (std::size_t p = 0; p < m.classes(); ++p) os << "," << m.at(a, p);
        os << "\n";
    }
    return os.str();
}

int cmd_catalog(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw Error(ErrorCode::InvalidConfig, "catalog needs --manifest");
    const auto catalog = load_catalog(cfg.manifest);
    const auto opts = image_options(cfg);
    using Key = std::tuple<std::size_t, int, int>;
    std::map<Key, std::tuple<std::size_t, std::size_t, std::size_t>> groups;  // recordings, samples, images
    std::size_t total_images = 0, total_samples = 0;
    for (const auto& rec : catalog.recordings) {
        auto& [n, samples, images] =
            groups[{class_index(rec.meta.location), rec.meta.fault_size_mils, rec.meta.load_hp}];
        const std::size_t count = image_count(rec.samples.size(), opts);
        ++n;
        samples += rec.samples.size();
        images += count;
        total_samples += rec.samples.size();
        total_images += count;
    }
    std::ostringstream os;
    os << "class,fault_size_mils,load_hp,recordings,samples,images\n";
    for (const auto& [key, v] : groups) {
        os << to_string(location_from_index(std::get<0>(key))) << "," << std::get<1>(key) << "," << std::get<2>(key)
           << "," << std::get<0>(v) << "," << std::get<1>(v) << "," << std::get<2>(v) << "\n";
    }
    os << "total,,," << catalog.recordings.size() << "," << total_samples << "," << total_images << "\n";
    emit(cfg, os.str());
    return kExitOk;
}

int cmd_synth(const RunConfig& cfg) {
    if (cfg.out.empty()) throw Error(ErrorCode::InvalidConfig, "synth needs --out <directory>");
    const fs::path dir = cfg.out;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
    const auto recordings = generate_recordings(cfg.synth_per_class, cfg.l, cfg.synth_fs_hz, cfg.seed);
    std::vector<ManifestEntry> entries;
    for (const auto& rec : recordings) {
        ManifestEntry e;
        e.meta = rec.meta;
        e.meta.source_path = rec.meta.id + ".f64";
        e.format = SampleFormat::F64le;
        write_f64le_samples(dir / e.meta.source_path, rec.samples);
        entries.push_back(std::move(e));
    }
    write_manifest(dir / "manifest.json", entries);
    std::cout << (dir / "manifest.json").string() << "\n";
    return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
    const std::string model_path = cfg.model.empty() ? cfg.out : cfg.model;
    if (model_path.empty()) throw Error(ErrorCode::InvalidConfig, "train needs --model or --out");
    const auto images = load_images(cfg);
    auto sets = split(images, split_spec(cfg));
    const auto train_cfg = train_config(cfg);
    if (augmentation_applies(sets.train, augmentation(cfg))) {
        auto balanced = balance_by_rotation(std::move(sets.train));
        for (const auto& w : balanced.warnings) progress("warning: " + w);
        sets.train = std::move(balanced.images);
    }
    progress("training on " + std::to_string(sets.train.size()) + " images");
    TrainHistory history;
    const auto model = train_new(sets.train, train_cfg, &history, [&](std::size_t epoch, double loss) {
        if ((epoch + 1) % 10 == 0 || epoch + 1 == train_cfg.epochs) {
            progress("epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(loss));
        }
    });
    save_model(model, model_path);
    std::cerr << "wrote " << model_path << "\n";
    if (!cfg.loss_log.empty()) {
        std::ofstream log(cfg.loss_log);
        if (!log) throw Error(ErrorCode::Io, "cannot write '" + cfg.loss_log + "'");
        log << "epoch,loss\n";
        log.precision(17);
        for (std::size_t e = 0; e < history.epoch_loss.size(); ++e) log << e + 1 << "," << history.epoch_loss[e] << "\n";
    }
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, bool all_images) {
    if (cfg.model.empty()) throw Error(ErrorCode::InvalidConfig, "eval needs --model");
    const auto model = load_model(cfg.model);
    const auto images = load_images(cfg);
    const auto test = all_images ? images : split(images, split_spec(cfg)).test;
    const auto m = evaluate(model, test);
    std::ostringstream os;
    os << "images," << m.total() << "\naccuracy," << m.accuracy() << "\n" << confusion_text(m);
    emit(cfg, os.str());
    return kExitOk;
}

int cmd_experiment(const RunConfig& cfg) {
    const auto images = load_images(cfg);
    const auto rep = run_repeated(images, train_config(cfg), split_spec(cfg), cfg.runs, augmentation(cfg),
                                  cfg.manifest.empty() ? "synthetic" : fs::path(cfg.manifest).stem().string(),
                                  progress);
    emit(cfg, emit_runs(rep, report_format(cfg)));
    return kExitOk;
}

int cmd_sweep(const RunConfig& cfg) {
    const auto recordings = load_recordings(cfg);
    const auto rows = frequency_sweep(recordings, cfg.factors, image_options(cfg), train_config(cfg),
                                      split_spec(cfg), cfg.runs, augmentation(cfg), progress);
    std::vector<ExperimentReport> reports;
    for (const auto& r : rows) reports.push_back(r.report);
    emit(cfg, emit_report(reports, report_format(cfg)));
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, double epsilon) {
    const auto model = Model::initialized(train_config(cfg).architecture(cfg.l), cfg.seed);
    Rng rng(derive_seed(cfg.seed, 1));
    std::vector<double> pixels(cfg.l * cfg.l);
    for (auto& p : pixels) p = rng.uniform(-1.0, 1.0);
    const std::size_t label = rng.below(cfg.num_classes);
    const auto r = grad_check(model, pixels, label, epsilon);
    std::ostringstream os;
    os.precision(6);
    os << "max relative error " << r.max_relative_error << " (" << parameter_name(r.worst_parameter) << "["
       << r.worst_element << "])\nmax absolute error " << r.max_absolute_error << "\n";
    emit(cfg, os.str());
    if (!(r.max_relative_error < kGradTolerance)) {
        std::cerr << "gradient check failed: error >= " << kGradTolerance << "\n";
        return kExitGradcheck;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vibration-image bearing fault classification"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "Master seed");
    app.add_option("--out", o.out, "Output file (synth: output directory)");
    app.add_option("--format", o.format, "Report format")->check(CLI::IsMember({"csv", "markdown", "md"}));

    const auto add_data = [&](CLI::App* sub) {
        sub->add_option("--manifest", o.manifest, "Dataset manifest (synthetic data if omitted)");
        sub->add_option("--l", o.l, "Image side length");
        sub->add_option("--decimation", o.decimation, "Decimation factor");
        sub->add_option("--per-class", o.per_class, "Synthetic images per class");
        sub->add_option("--fs", o.fs_hz, "Synthetic sampling rate in Hz");
    };
    const auto add_training = [&](CLI::App* sub) {
        sub->add_option("--epochs", o.epochs, "Training epochs");
        sub->add_option("--batch-size", o.batch_size, "Mini-batch size");
        sub->add_option("--lr", o.learning_rate, "Learning rate");
        sub->add_option("--momentum", o.momentum, "Momentum coefficient");
        sub->add_option("--pooling", o.pooling, "Pooling layers")->check(CLI::IsMember({"avg", "max"}));
        sub->add_option("--augment", o.augment, "Baseline rotation augmentation")
            ->check(CLI::IsMember({"auto", "on", "off"}));
    };

    auto* catalog = app.add_subcommand("catalog", "Summarize a dataset manifest");
    catalog->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    catalog->add_option("--l", o.l, "Image side length");
    catalog->add_option("--decimation", o.decimation, "Decimation factor");

    auto* synth = app.add_subcommand("synth", "Write synthetic recordings and a manifest to --out");
    synth->add_option("--per-class", o.per_class, "Images per class");
    synth->add_option("--l", o.l, "Image side length");
    synth->add_option("--fs", o.fs_hz, "Sampling rate in Hz");

    auto* train = app.add_subcommand("train", "Train a model on the training split");
    add_data(train);
    add_training(train);
    train->add_option("--model", o.model, "Model output path");
    train->add_option("--loss-log", o.loss_log, "Per-epoch loss CSV");

    bool eval_all = false;
    auto* eval = app.add_subcommand("eval", "Evaluate a saved model");
    add_data(eval);
    eval->add_option("--model", o.model, "Model file")->required();
    eval->add_flag("--all", eval_all, "Score every image instead of the test split");

    auto* experiment = app.add_subcommand("experiment", "Repeated train/test runs");
    add_data(experiment);
    add_training(experiment);
    experiment->add_option("--runs", o.runs, "Number of runs");

    auto* sweep = app.add_subcommand("sweep", "Accuracy across decimation factors");
    add_data(sweep);
    add_training(sweep);
    sweep->add_option("--runs", o.runs, "Runs per factor");
    sweep->add_option("--factors", o.factors, "Decimation factors")->delimiter(',');

    double epsilon = 1e-5;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check of a fresh model");
    gradcheck->add_option("--epsilon", epsilon, "Central-difference step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        const RunConfig cfg = resolve(o);
        if (*catalog) return cmd_catalog(cfg);
        if (*synth) return cmd_synth(cfg);
        if (*train) return cmd_train(cfg);
        if (*eval) return cmd_eval(cfg, eval_all);
        if (*experiment) return cmd_experiment(cfg);
        if (*sweep) return cmd_sweep(cfg);
        if (*gradcheck) return cmd_gradcheck(cfg, epsilon);
    } catch (const CatalogError& e) {
        std::cerr << "error: " << e.what() << "\n";
        for (const auto& [id, msg] : e.failures()) std::cerr << "  " << id << ": " << msg << "\n";
        return is_validation_error(e.code()) ? kExitValidation : kExitRuntime;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_validation_error(e.code()) ? kExitValidation : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
