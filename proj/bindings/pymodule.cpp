#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "attnrel/baselines.hpp"
#include "attnrel/dataset.hpp"
#include "attnrel/errors.hpp"
#include "attnrel/eval.hpp"
#include "attnrel/explain.hpp"
#include "attnrel/io.hpp"
#include "attnrel/relevancy.hpp"
#include "attnrel/segmask.hpp"
#include "attnrel/train.hpp"

namespace py = pybind11;
using namespace attnrel;

namespace {

std::vector<std::vector<double>> matrix_rows(const Tensor& m) {
    std::vector<std::vector<double>> rows(m.dim(0), std::vector<double>(m.dim(1)));
    for (std::size_t r = 0; r < m.dim(0); ++r)
        for (std::size_t c = 0; c < m.dim(1); ++c) rows[r][c] = m(r, c);
    return rows;
}

Target make_target(int query, int cls) { return Target{query, cls}; }

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "attention relevancy toolkit";
    m.attr("__version__") = kToolVersion;

    py::class_<Sample>(m, "Sample")
        .def(py::init<>())
        .def_readwrite("text", &Sample::text)
        .def_readwrite("image", &Sample::image)
        .def_readwrite("label", &Sample::label)
        .def_readwrite("designated_text", &Sample::designated_text)
        .def_readwrite("designated_image", &Sample::designated_image);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("grid", &Dataset::grid)
        .def_readonly("samples", &Dataset::samples)
        .def_property_readonly("kind", [](const Dataset& d) { return to_string(d.kind); });

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("layers", &ModelConfig::layers)
        .def_readwrite("heads", &ModelConfig::heads)
        .def_readwrite("head_dim", &ModelConfig::head_dim)
        .def_readwrite("text_tokens", &ModelConfig::text_tokens)
        .def_readwrite("image_tokens", &ModelConfig::image_tokens)
        .def_readwrite("queries", &ModelConfig::queries)
        .def_readwrite("classes", &ModelConfig::classes)
        .def_readwrite("seed", &ModelConfig::seed)
        .def_property(
            "architecture",
            [](const ModelConfig& c) { return to_string(c.architecture); },
            [](ModelConfig& c, const std::string& name) {
                c.architecture = architecture_from_string(name);
            });

    py::class_<Model>(m, "Model")
        .def(py::init<const ModelConfig&>())
        .def_property_readonly("config", &Model::config)
        .def("parameters", &Model::flat_parameters)
        .def("attention_maps", [](const Model& model, const Sample& sample) {
            const ForwardTrace trace = model.forward(sample);
            py::list maps;
            for (const AttentionRecord& record : trace.records) {
                py::dict entry;
                entry["kind"] = to_string(record.kind);
                entry["layer"] = record.layer_index;
                std::vector<std::vector<std::vector<double>>> a(
                    record.attention.dim(0),
                    std::vector<std::vector<double>>(record.attention.dim(1),
                                                     std::vector<double>(record.attention.dim(2))));
                for (std::size_t h = 0; h < record.attention.dim(0); ++h)
                    for (std::size_t i = 0; i < record.attention.dim(1); ++i)
                        for (std::size_t j = 0; j < record.attention.dim(2); ++j)
                            a[h][i][j] = record.attention(h, i, j);
                entry["attention"] = a;
                maps.append(entry);
            }
            return maps;
        })
        .def("logits", [](const Model& model, const Sample& sample) {
            const ForwardTrace trace = model.forward(sample);
            if (trace.logits.rank() == 1) return py::cast(trace.logits.data());
            return py::cast(matrix_rows(trace.logits));
        });

    m.def("default_vqa_config", [](const std::string& arch, std::uint64_t seed) {
        return default_vqa_config(architecture_from_string(arch), seed);
    });
    m.def("default_detection_config", &default_detection_config);
    py::class_<VqaVocab>(m, "VqaVocab").def(py::init<>());
    m.def("gen_vqa_task", &gen_vqa_task, py::arg("seed"), py::arg("n"),
          py::arg("text_tokens") = 6, py::arg("image_tokens") = 9, py::arg("vocab") = VqaVocab{});
    m.def("gen_detection_task", &gen_detection_task, py::arg("seed"), py::arg("n"),
          py::arg("grid") = 6, py::arg("queries") = 3, py::arg("classes") = 3);

    m.def(
        "train",
        [](const Model& model, const Dataset& dataset, int epochs, double lr, int batch) {
            TrainOptions opt;
            opt.epochs = epochs;
            opt.learning_rate = lr;
            opt.batch_size = batch;
            TrainResult result = train(model, dataset, opt);
            return py::make_tuple(result.model, result.accuracy);
        },
        py::arg("model"), py::arg("dataset"), py::arg("epochs") = 30, py::arg("lr") = 0.05,
        py::arg("batch") = 16);
    m.def("evaluate_accuracy", &evaluate_accuracy);

    m.def(
        "explain",
        [](const Model& model, const Sample& sample, const std::string& method,
           const std::string& variant, int target_query, int target_cls) {
            ForwardTrace probe = model.forward(sample);
            const Target target = target_cls < 0 ? predicted_target(probe)
                                                 : make_target(target_query, target_cls);
            const Explanation result = explain(model, sample, method_from_string(method),
                                               ablation_from_string(variant), target);
            py::dict out;
            out["text"] = result.tokens.text;
            out["image"] = result.tokens.image;
            out["target_class"] = result.target.cls;
            out["target_query"] = result.target.query;
            py::dict maps;
            for (const auto& [name, tensor] : result.state.maps())
                maps[name.c_str()] = matrix_rows(*tensor);
            out["maps"] = maps;
            return out;
        },
        py::arg("model"), py::arg("sample"), py::arg("method") = "ours",
        py::arg("variant") = "full", py::arg("target_query") = -1, py::arg("target_cls") = -1);

    m.def(
        "perturbation_auc",
        [](const Model& model, const Dataset& dataset, const std::string& method,
           const std::string& modality, const std::string& polarity, int steps) {
            EvalOptions opt;
            opt.steps = steps;
            const PerturbationCurve curve = perturb_curve(
                model, dataset, method_from_string(method),
                modality == "text" ? Modality::Text : Modality::Image,
                polarity == "pos" ? Polarity::Positive : Polarity::Negative, opt);
            return py::make_tuple(auc(curve), curve.fractions, curve.accuracy);
        },
        py::arg("model"), py::arg("dataset"), py::arg("method") = "ours",
        py::arg("modality") = "image", py::arg("polarity") = "neg", py::arg("steps") = 11);

    m.def("ground_truth_rank",
          [](const Model& model, const Dataset& dataset, const std::string& method,
             const std::string& modality) {
              return ground_truth_rank(model, dataset, method_from_string(method),
                                       modality == "text" ? Modality::Text : Modality::Image);
          });

    m.def("trapezoid_auc", [](std::vector<double> fractions, std::vector<double> accuracy) {
        PerturbationCurve curve;
        curve.fractions = std::move(fractions);
        curve.accuracy = std::move(accuracy);
        return auc(curve);
    });

    m.def("otsu_threshold", [](const std::vector<double>& heat) {
        const OtsuResult result = otsu(heat);
        return py::make_tuple(result.threshold, result.degenerate);
    });
    m.def("otsu_mask", [](const std::vector<double>& heat) {
        const std::vector<std::uint8_t> mask = otsu_mask(heat);
        return std::vector<int>(mask.begin(), mask.end());
    });
    m.def("mask_iou", [](const std::vector<int>& a, const std::vector<int>& b) {
        return mask_iou(std::vector<std::uint8_t>(a.begin(), a.end()),
                        std::vector<std::uint8_t>(b.begin(), b.end()));
    });
    m.def(
        "build_masks",
        [](const std::vector<std::vector<double>>& rows,
           const std::vector<std::vector<double>>& logits, int grid, int background_class) {
            Tensor r({rows.size(), rows[0].size()});
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t j = 0; j < rows[0].size(); ++j) r(i, j) = rows[i][j];
            Tensor l({logits.size(), logits[0].size()});
            for (std::size_t i = 0; i < logits.size(); ++i)
                for (std::size_t j = 0; j < logits[0].size(); ++j) l(i, j) = logits[i][j];
            SegMaskOptions opt;
            opt.background_class = background_class;
            py::list out;
            for (const SegMask& mask : build_masks(r, l, grid, opt)) {
                py::dict entry;
                entry["query"] = mask.query;
                entry["class_id"] = mask.class_id;
                entry["probability"] = mask.probability;
                entry["size"] = mask.size;
                entry["mask"] = std::vector<int>(mask.mask.begin(), mask.mask.end());
                out.append(entry);
            }
            return out;
        },
        py::arg("rows"), py::arg("logits"), py::arg("grid"), py::arg("background_class") = -1);

    py::register_exception<RejectedInput>(m, "RejectedInputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigurationError", PyExc_ValueError);
    py::register_exception<TraceError>(m, "TraceStateError", PyExc_RuntimeError);
    py::register_exception<NumericError>(m, "NumericFailure", PyExc_ArithmeticError);
}
