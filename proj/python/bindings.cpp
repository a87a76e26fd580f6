#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vibimg/error.hpp"
#include "vibimg/experiment.hpp"
#include "vibimg/mat5.hpp"
#include "vibimg/model.hpp"
#include "vibimg/preprocess.hpp"
#include "vibimg/synthgen.hpp"

namespace py = pybind11;
using namespace vibimg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> flat(const Array& a) { return {a.data(), a.data() + a.size()}; }

py::dict mat_dict(const Mat5Contents& contents) {
    py::dict vars;
    for (const auto& [name, arr] : contents.variables) {
        // MAT data is column-major
        std::vector<py::ssize_t> shape(arr.dims.begin(), arr.dims.end());
        std::vector<py::ssize_t> strides(shape.size());
        py::ssize_t step = sizeof(double);
        for (std::size_t i = 0; i < shape.size(); ++i) {
            strides[i] = step;
            step *= shape[i];
        }
        py::array_t<double> out(shape, strides);
        std::copy(arr.data.begin(), arr.data.end(), out.mutable_data());
        vars[py::str(name)] = out;
    }
    return vars;
}

std::vector<VibrationImage> to_images(const Array& images, const std::vector<int>& labels) {
    if (images.ndim() != 3 || images.shape(1) != images.shape(2)) {
        throw Error(ErrorCode::ShapeMismatch, "images must have shape (n, l, l)");
    }
    const auto n = static_cast<std::size_t>(images.shape(0));
    const auto side = static_cast<std::size_t>(images.shape(1));
    if (labels.size() != n) throw Error(ErrorCode::LengthMismatch, "one label per image");
    std::vector<VibrationImage> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].side = side;
        out[i].pixels.assign(images.data() + i * side * side, images.data() + (i + 1) * side * side);
        out[i].label = location_from_index(static_cast<std::size_t>(labels[i]));
    }
    return out;
}

py::tuple from_images(const std::vector<VibrationImage>& images) {
    const std::size_t side = images.empty() ? 0 : images.front().side;
    py::array_t<double> pixels({images.size(), side, side});
    std::vector<int> labels;
    double* dst = pixels.mutable_data();
    for (const auto& img : images) {
        dst = std::copy(img.pixels.begin(), img.pixels.end(), dst);
        labels.push_back(static_cast<int>(class_index(img.label)));
    }
    return py::make_tuple(pixels, labels);
}

VibrationImage single_image(const Array& image) {
    if (image.ndim() != 2 || image.shape(0) != image.shape(1)) {
        throw Error(ErrorCode::ShapeMismatch, "image must be square");
    }
    VibrationImage img;
    img.side = static_cast<std::size_t>(image.shape(0));
    img.pixels = flat(image);
    return img;
}

TrainConfig make_train_config(std::size_t epochs, std::size_t batch_size, double lr, double momentum,
                              std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.learning_rate = lr;
    cfg.momentum = momentum;
    cfg.seed = seed;
    return cfg;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Vibration-image bearing fault classification";

    static py::exception<Error> error(m, "VibimgError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error, e.what());
        }
    });

    m.def("read_mat5", [](const std::filesystem::path& path) {
        const auto c = read_mat5_file(path);
        return py::make_tuple(mat_dict(c), c.warnings);
    }, py::arg("path"), "Variables of a MAT level-5 file (double arrays) and the skip warnings.");
    m.def("read_mat5_bytes", [](const py::bytes& data) {
        const std::string_view view = data;
        const auto c = read_mat5(std::as_bytes(std::span(view.data(), view.size())));
        return py::make_tuple(mat_dict(c), c.warnings);
    }, py::arg("data"));

    m.def("normalize_signal", [](const Array& x) {
        const auto out = normalize_signal(flat(x));
        return py::array_t<double>(out.size(), out.data());
    }, py::arg("samples"));
    m.def("decimate", [](const Array& x, std::size_t factor) {
        const auto out = decimate(flat(x), factor);
        return py::array_t<double>(out.size(), out.data());
    }, py::arg("samples"), py::arg("factor"));
    m.def("to_vibration_image", [](const Array& segment, std::size_t side) {
        const auto img = to_vibration_image(Segment{flat(segment), FaultLocation::Baseline, 0}, side);
        py::array_t<double> out({side, side});
        std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
        return out;
    }, py::arg("segment"), py::arg("side") = 20);
    m.def("from_vibration_image", [](const Array& image) {
        const auto s = from_vibration_image(single_image(image)).samples;
        return py::array_t<double>(s.size(), s.data());
    }, py::arg("image"));
    m.def("rotate90", [](const Array& image, int turns) {
        const auto r = rotate90(single_image(image), turns);
        py::array_t<double> out({r.side, r.side});
        std::copy(r.pixels.begin(), r.pixels.end(), out.mutable_data());
        return out;
    }, py::arg("image"), py::arg("quarter_turns") = 1);
    m.def("signal_to_images", [](const Array& samples, int label, std::size_t side, std::size_t decimation) {
        RawRecording rec;
        rec.meta.id = "signal";
        rec.meta.location = location_from_index(static_cast<std::size_t>(label));
        rec.meta.fault_size_mils = label == 0 ? 0 : 7;
        rec.samples = flat(samples);
        return from_images(build_images(rec, ImageOptions{side, decimation, false}));
    }, py::arg("samples"), py::arg("label"), py::arg("side") = 20, py::arg("decimation") = 1,
       "Normalize, segment and map a raw signal; returns (images, labels).");

    m.def("synth_dataset", [](std::size_t per_class, std::size_t side, double fs, std::uint64_t seed) {
        return from_images(generate_dataset(per_class, side, fs, seed));
    }, py::arg("per_class") = 150, py::arg("side") = 20, py::arg("fs_hz") = 48000.0, py::arg("seed") = 0,
       "Synthetic images and labels, per_class of each class.");

    py::class_<Model>(m, "Model")
        .def(py::init([](std::size_t side, std::size_t conv1, std::size_t conv2, std::size_t hidden,
                         std::size_t classes, const std::string& pooling, std::uint64_t seed) {
                 Architecture arch{side, conv1, conv2, hidden, classes,
                                   pooling == "max" ? Pooling::Max : Pooling::Average};
                 if (pooling != "avg" && pooling != "max") {
                     throw Error(ErrorCode::InvalidConfig, "pooling must be 'avg' or 'max'");
                 }
                 return Model::initialized(arch, seed);
             }),
             py::arg("side") = 20, py::arg("conv1_filters") = 6, py::arg("conv2_filters") = 12,
             py::arg("hidden") = 64, py::arg("num_classes") = 4, py::arg("pooling") = "avg", py::arg("seed") = 0)
        .def("forward", [](const Model& self, const Array& image) { return self.forward(flat(image)); },
             py::arg("image"), "Class probabilities.")
        .def("logits", [](const Model& self, const Array& image) { return self.logits(flat(image)); },
             py::arg("image"))
        .def("predict", [](const Model& self, const Array& image) { return self.predict(single_image(image)); },
             py::arg("image"))
        .def("grad_check", [](const Model& self, const Array& image, std::size_t label, double eps) {
            const auto r = grad_check(self, flat(image), label, eps);
            py::dict out;
            out["max_relative_error"] = r.max_relative_error;
            out["max_absolute_error"] = r.max_absolute_error;
            out["worst_parameter"] = std::string(parameter_name(r.worst_parameter));
            out["worst_element"] = r.worst_element;
            return out;
        }, py::arg("image"), py::arg("label"), py::arg("epsilon") = 1e-5)
        .def("save", [](const Model& self, const std::filesystem::path& p) { save_model(self, p); }, py::arg("path"))
        .def_static("load", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"))
        .def("to_bytes", [](const Model& self) {
            const auto b = serialize_model(self);
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        })
        .def_static("from_bytes", [](const py::bytes& data) {
            const std::string_view view = data;
            return deserialize_model(std::as_bytes(std::span(view.data(), view.size())));
        }, py::arg("data"))
        .def("__eq__", [](const Model& a, const Model& b) { return a == b; });

    m.def("train", [](Model& model, const Array& images, const std::vector<int>& labels, std::size_t epochs,
                      std::size_t batch_size, double lr, double momentum, std::uint64_t seed) {
        const auto imgs = to_images(images, labels);
        py::gil_scoped_release release;
        return train(model, imgs, make_train_config(epochs, batch_size, lr, momentum, seed)).epoch_loss;
    }, py::arg("model"), py::arg("images"), py::arg("labels"), py::arg("epochs") = 150, py::arg("batch_size") = 50,
       py::arg("learning_rate") = 0.01, py::arg("momentum") = 0.9, py::arg("seed") = 0,
       "Trains in place; returns the mean loss per epoch.");

    m.def("evaluate", [](const Model& model, const Array& images, const std::vector<int>& labels) {
        const auto cm = evaluate(model, to_images(images, labels));
        std::vector<std::vector<std::size_t>> rows(cm.classes(), std::vector<std::size_t>(cm.classes()));
        for (std::size_t a = 0; a < cm.classes(); ++a)
            for (std::size_t p = 0; p < cm.classes(); ++p) rows[a][p] = cm.at(a, p);
        return py::make_tuple(cm.accuracy(), rows);
    }, py::arg("model"), py::arg("images"), py::arg("labels"), "Returns (accuracy, confusion[actual][predicted]).");

    m.def("run_repeated", [](const Array& images, const std::vector<int>& labels, std::size_t runs,
                             std::size_t epochs, std::size_t batch_size, double lr, double momentum,
                             std::uint64_t seed, const std::string& augment) {
        const auto imgs = to_images(images, labels);
        SplitSpec split;
        split.seed = seed;
        const auto mode = augment == "on" ? Augmentation::On : augment == "off" ? Augmentation::Off : Augmentation::Auto;
        ExperimentReport rep;
        {
            py::gil_scoped_release release;
            rep = run_repeated(imgs, make_train_config(epochs, batch_size, lr, momentum, seed), split, runs, mode);
        }
        py::dict out;
        out["accuracies"] = rep.run_accuracies;
        out["mean"] = rep.mean;
        out["std"] = rep.std;
        out["n_images"] = rep.n_images;
        return out;
    }, py::arg("images"), py::arg("labels"), py::arg("runs") = 5, py::arg("epochs") = 150,
       py::arg("batch_size") = 50, py::arg("learning_rate") = 0.01, py::arg("momentum") = 0.9, py::arg("seed") = 0,
       py::arg("augment") = "auto");

    m.def("summarize", [](const std::vector<double>& v) {
        const auto s = summarize(v);
        return py::make_tuple(s.mean, s.std);
    }, py::arg("values"), "(mean, sample std).");
    m.def("train_count", &train_count, py::arg("n"), py::arg("fraction") = 5.0 / 6.0);
    m.def("format_frequency", &format_frequency, py::arg("hz"));
}
