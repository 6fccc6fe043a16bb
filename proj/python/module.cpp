#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sfda/data.hpp"
#include "sfda/errors.hpp"
#include "sfda/ftsp.hpp"
#include "sfda/mathcore.hpp"
#include "sfda/model.hpp"
#include "sfda/pipeline.hpp"
#include "sfda/report.hpp"
#include "sfda/tsal.hpp"

namespace py = pybind11;
using namespace sfda;

namespace {

py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict pseudo_labels_dict(const PseudoLabelSet& pls) {
    std::vector<std::string> stages;
    for (auto s : pls.stage) stages.emplace_back(label_stage_name(s));
    std::vector<std::vector<std::pair<std::size_t, double>>> trusted;
    for (const auto& cls : pls.trusted.per_class) {
        auto& row = trusted.emplace_back();
        for (const auto& e : cls) row.emplace_back(e.index, e.probability);
    }
    py::dict d;
    d["labels"] = pls.labels;
    d["confidence"] = pls.confidence;
    d["retained"] = pls.retained;
    d["stage"] = stages;
    d["classifier_labels"] = pls.classifier_labels;
    d["trusted"] = trusted;
    d["isolated_count"] = pls.isolated_count;
    return d;
}

} // namespace

PYBIND11_MODULE(_sfda, m) {
    m.doc() = "Source-free domain adaptation core";

    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::enum_<Activation>(m, "Activation")
        .value("identity", Activation::Identity)
        .value("tanh", Activation::Tanh);
    py::enum_<TrustedClassifierKind>(m, "TrustedClassifierKind")
        .value("mlr", TrustedClassifierKind::Mlr)
        .value("lda", TrustedClassifierKind::Lda);

    // -- configs ---------------------------------------------------------------

    py::class_<SynthShiftConfig>(m, "SynthShiftConfig")
        .def(py::init<>())
        .def_readwrite("num_classes", &SynthShiftConfig::num_classes)
        .def_readwrite("feature_dim", &SynthShiftConfig::feature_dim)
        .def_readwrite("samples_per_class_source", &SynthShiftConfig::samples_per_class_source)
        .def_readwrite("samples_per_class_target", &SynthShiftConfig::samples_per_class_target)
        .def_readwrite("cluster_stddev", &SynthShiftConfig::cluster_stddev)
        .def_readwrite("rotation_angle", &SynthShiftConfig::rotation_angle)
        .def_readwrite("translation_scale", &SynthShiftConfig::translation_scale)
        .def_readwrite("noise_scale_target", &SynthShiftConfig::noise_scale_target)
        .def_readwrite("seed", &SynthShiftConfig::seed)
        .def("to_dict", [](const SynthShiftConfig& c) { return to_py(to_json(c)); });

    py::class_<OptimConfig>(m, "OptimConfig")
        .def(py::init<>())
        .def_readwrite("lr0", &OptimConfig::lr0)
        .def_readwrite("momentum", &OptimConfig::momentum)
        .def_readwrite("weight_decay", &OptimConfig::weight_decay)
        .def_readwrite("nesterov", &OptimConfig::nesterov)
        .def_readwrite("clip_norm", &OptimConfig::clip_norm)
        .def_readwrite("use_schedule", &OptimConfig::use_schedule);

    py::class_<SourceTrainConfig>(m, "SourceTrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &SourceTrainConfig::epochs)
        .def_readwrite("batch_size", &SourceTrainConfig::batch_size)
        .def_readwrite("lr0", &SourceTrainConfig::lr0)
        .def_readwrite("label_smoothing", &SourceTrainConfig::label_smoothing)
        .def_readwrite("train_fraction", &SourceTrainConfig::train_fraction)
        .def_readwrite("hidden_dim", &SourceTrainConfig::hidden_dim)
        .def_readwrite("activation", &SourceTrainConfig::activation)
        .def_readwrite("optim", &SourceTrainConfig::optim)
        .def_readwrite("seed", &SourceTrainConfig::seed)
        .def("to_dict", [](const SourceTrainConfig& c) { return to_py(to_json(c)); });

    py::class_<TsalConfig>(m, "TsalConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &TsalConfig::alpha)
        .def_readwrite("smoothing", &TsalConfig::smoothing)
        .def_readwrite("tau_dis_start", &TsalConfig::tau_dis_start)
        .def_readwrite("tau_dis_end", &TsalConfig::tau_dis_end)
        .def_readwrite("tau_div_start", &TsalConfig::tau_div_start)
        .def_readwrite("tau_div_end", &TsalConfig::tau_div_end)
        .def_readwrite("epochs", &TsalConfig::epochs)
        .def_readwrite("detach_target", &TsalConfig::detach_target)
        .def("to_dict", [](const TsalConfig& c) { return to_py(to_json(c)); });

    py::class_<SpreadingConfig>(m, "SpreadingConfig")
        .def(py::init<>())
        .def_readwrite("rbf_gamma", &SpreadingConfig::rbf_gamma)
        .def_readwrite("alpha", &SpreadingConfig::alpha)
        .def_readwrite("max_iter", &SpreadingConfig::max_iter)
        .def_readwrite("tol", &SpreadingConfig::tol);

    py::class_<FtspConfig>(m, "FtspConfig")
        .def(py::init<>())
        .def_readwrite("k", &FtspConfig::k)
        .def_readwrite("classifier", &FtspConfig::classifier)
        .def_readwrite("mlr_l2_lambda", &FtspConfig::mlr_l2_lambda)
        .def_readwrite("mlr_max_iter", &FtspConfig::mlr_max_iter)
        .def_readwrite("mlr_grad_tol", &FtspConfig::mlr_grad_tol)
        .def_readwrite("lda_shrinkage", &FtspConfig::lda_shrinkage)
        .def_readwrite("deletion_frac", &FtspConfig::deletion_frac)
        .def_readwrite("spreading", &FtspConfig::spreading)
        .def_readwrite("refinement_enabled", &FtspConfig::refinement_enabled)
        .def("to_dict", [](const FtspConfig& c) { return to_py(to_json(c)); });

    py::class_<AdaptConfig>(m, "AdaptConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &AdaptConfig::epochs)
        .def_readwrite("batch_size", &AdaptConfig::batch_size)
        .def_readwrite("lr0", &AdaptConfig::lr0)
        .def_readwrite("optim", &AdaptConfig::optim)
        .def_readwrite("ftsp", &AdaptConfig::ftsp)
        .def_readwrite("tsal", &AdaptConfig::tsal)
        .def_readwrite("mixup_enabled", &AdaptConfig::mixup_enabled)
        .def_readwrite("mixup_beta", &AdaptConfig::mixup_beta)
        .def_readwrite("seed", &AdaptConfig::seed)
        .def("to_dict", [](const AdaptConfig& c) { return to_py(to_json(c)); });

    // -- data ------------------------------------------------------------------

    py::class_<FeatureDataset>(m, "Dataset")
        .def(py::init([](Matrix features, std::optional<std::vector<int>> labels, int num_classes,
                         std::string name) {
                 FeatureDataset ds{std::move(features), std::move(labels), num_classes, std::move(name)};
                 ds.validate();
                 return ds;
             }),
             py::arg("features"), py::arg("labels") = py::none(), py::arg("num_classes"), py::arg("name") = "")
        .def_readonly("features", &FeatureDataset::features)
        .def_readonly("labels", &FeatureDataset::labels)
        .def_readonly("num_classes", &FeatureDataset::num_classes)
        .def_readonly("name", &FeatureDataset::domain_name)
        .def_property_readonly("labeled", &FeatureDataset::labeled)
        .def("__len__", &FeatureDataset::size)
        .def("__eq__", [](const FeatureDataset& a, const FeatureDataset& b) { return a == b; });

    m.def("synth_domain_pair", [](const SynthShiftConfig& cfg) {
        DomainPair p = synth_domain_pair(cfg);
        return py::make_tuple(std::move(p.source), std::move(p.target));
    }, py::arg("config") = SynthShiftConfig{});
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
    m.def("load_dataset", &load_dataset, py::arg("path"));

    // -- model -----------------------------------------------------------------

    py::class_<AdapterClassifier>(m, "Model")
        .def(py::init([](std::size_t d, std::size_t h, std::size_t c, Activation act, std::uint64_t seed) {
                 Rng rng(seed);
                 return AdapterClassifier::create(d, h, c, act, rng);
             }),
             py::arg("input_dim"), py::arg("hidden_dim"), py::arg("num_classes"),
             py::arg("activation") = Activation::Identity, py::arg("seed") = 0)
        .def_readwrite("adapter_weight", &AdapterClassifier::adapter_weight)
        .def_readwrite("adapter_bias", &AdapterClassifier::adapter_bias)
        .def_readwrite("classifier_weight", &AdapterClassifier::classifier_weight)
        .def_readwrite("classifier_bias", &AdapterClassifier::classifier_bias)
        .def_readwrite("activation", &AdapterClassifier::activation)
        .def_readwrite("classifier_frozen", &AdapterClassifier::classifier_frozen)
        .def_property_readonly("input_dim", &AdapterClassifier::input_dim)
        .def_property_readonly("hidden_dim", &AdapterClassifier::hidden_dim)
        .def_property_readonly("num_classes", &AdapterClassifier::num_classes)
        .def("forward", [](const AdapterClassifier& self, const Matrix& x) {
            ForwardResult r = forward(self, x);
            return py::make_tuple(std::move(r.features), std::move(r.logits));
        }, py::arg("x"))
        .def("backward", [](const AdapterClassifier& self, const Matrix& x, const Matrix& dloss_dlogits) {
            const ForwardResult r = forward(self, x);
            ParamGrads g = backward(self, r.cache, dloss_dlogits);
            py::dict d;
            d["adapter_weight"] = std::move(g.adapter_weight);
            d["adapter_bias"] = std::move(g.adapter_bias);
            d["classifier_weight"] = std::move(g.classifier_weight);
            d["classifier_bias"] = std::move(g.classifier_bias);
            return d;
        }, py::arg("x"), py::arg("dloss_dlogits"))
        .def("predict", [](const AdapterClassifier& self, const Matrix& x) { return predict(self, x); })
        .def("to_bytes", [](const AdapterClassifier& self) {
            const auto b = encode_checkpoint(self);
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        })
        .def_static("from_bytes", [](const py::bytes& data) {
            const std::string s = data;
            return decode_checkpoint(std::vector<std::uint8_t>(s.begin(), s.end()));
        })
        .def("save", [](const AdapterClassifier& self, const std::filesystem::path& p) { save_checkpoint(self, p); })
        .def_static("load", &load_checkpoint)
        .def("same_parameters", &AdapterClassifier::same_parameters);

    m.def("lr_at", &lr_at, py::arg("t"), py::arg("total_steps"), py::arg("lr0"));

    // -- math ------------------------------------------------------------------

    m.def("softmax", [](const std::vector<double>& l, double tau) { return softmax(l, tau); },
          py::arg("logits"), py::arg("temperature") = 1.0);
    m.def("entropy", [](const std::vector<double>& p) { return entropy(p); }, py::arg("p"));
    m.def("cross_entropy",
          [](const std::vector<double>& t, const std::vector<double>& p) { return cross_entropy(t, p); },
          py::arg("target"), py::arg("p"));
    m.def("topk_indices", [](const std::vector<double>& v, std::size_t k) { return topk_indices(v, k); },
          py::arg("values"), py::arg("k"));
    m.def("l2_normalize_rows", &l2_normalize_rows, py::arg("x"));

    // -- tsal ------------------------------------------------------------------

    m.def("tau_dis", &tau_dis, py::arg("epoch"), py::arg("config") = TsalConfig{});
    m.def("tau_div", &tau_div, py::arg("epoch"), py::arg("config") = TsalConfig{});
    m.def("smooth_labels", [](const std::vector<double>& oh, double s) { return smooth_labels(oh, s); },
          py::arg("one_hot"), py::arg("smoothing"));
    m.def("target_distribution",
          [](const std::vector<double>& l, const std::vector<double>& y, std::size_t epoch, const TsalConfig& cfg) {
              return target_distribution(l, y, epoch, cfg);
          },
          py::arg("logits"), py::arg("y_smooth"), py::arg("epoch"), py::arg("config") = TsalConfig{});
    m.def("tsal_batch", [](const Matrix& logits, const Matrix& onehots, std::size_t epoch, const TsalConfig& cfg) {
        TsalBatchResult r = tsal_batch(logits, onehots, epoch, cfg);
        py::dict d;
        d["loss"] = r.loss;
        d["dis"] = r.dis;
        d["div"] = r.div;
        d["dloss_dlogits"] = std::move(r.dloss_dlogits);
        d["p_bar"] = std::move(r.p_bar);
        return d;
    }, py::arg("logits"), py::arg("pseudo_onehots"), py::arg("epoch"), py::arg("config") = TsalConfig{});
    m.def("mixup", [](const Matrix& x, const Matrix& targets, double lambda, const std::vector<std::size_t>& partner) {
        MixupResult r = mixup_with(x, targets, lambda, partner);
        return py::make_tuple(std::move(r.features), std::move(r.targets));
    }, py::arg("x"), py::arg("targets"), py::arg("lam"), py::arg("partner"));

    // -- ftsp ------------------------------------------------------------------

    m.def("select_trusted", [](const Matrix& probs, std::size_t k) {
        std::vector<std::vector<std::pair<std::size_t, double>>> out;
        for (const auto& cls : select_trusted(probs, k).per_class) {
            auto& row = out.emplace_back();
            for (const auto& e : cls) row.emplace_back(e.index, e.probability);
        }
        return out;
    }, py::arg("probs"), py::arg("k"));
    m.def("fit_mlr", [](const Matrix& x, const std::vector<int>& y, std::size_t c, double lambda) {
        MlrFit f = fit_mlr(x, y, c, lambda);
        return py::make_tuple(std::move(f.classifier.weight), std::move(f.classifier.bias));
    }, py::arg("x"), py::arg("y"), py::arg("num_classes"), py::arg("l2_lambda") = 1e-3);
    m.def("fit_lda", [](const Matrix& x, const std::vector<int>& y, std::size_t c, double s) {
        TrustedClassifier tc = fit_lda(x, y, c, s);
        return py::make_tuple(std::move(tc.weight), std::move(tc.bias));
    }, py::arg("x"), py::arg("y"), py::arg("num_classes"), py::arg("shrinkage") = 0.99);
    m.def("delete_uncertain", &delete_uncertain, py::arg("probs"), py::arg("labels"), py::arg("deletion_frac"));
    m.def("spreading_affinity", &spreading_affinity, py::arg("features"), py::arg("rbf_gamma"));
    m.def("label_spreading",
          [](const Matrix& x, const std::vector<int>& labels, const std::vector<bool>& retained, std::size_t c,
             const SpreadingConfig& cfg) {
              SpreadingResult r = label_spreading(x, labels, retained, c, cfg);
              py::dict d;
              d["labels"] = std::move(r.labels);
              d["scores"] = std::move(r.scores);
              d["isolated"] = std::move(r.isolated);
              d["iterations"] = r.iterations;
              return d;
          },
          py::arg("features"), py::arg("labels"), py::arg("retained"), py::arg("num_classes"),
          py::arg("config") = SpreadingConfig{});
    m.def("ftsp_pipeline", [](const AdapterClassifier& model, const Matrix& x, const FtspConfig& cfg) {
        PseudoLabelSet pls;
        {
            py::gil_scoped_release nogil;
            pls = ftsp_pipeline(model, x, cfg);
        }
        return pseudo_labels_dict(pls);
    }, py::arg("model"), py::arg("features"), py::arg("config") = FtspConfig{});

    // -- pipeline --------------------------------------------------------------

    m.def("evaluate", [](const AdapterClassifier& model, const FeatureDataset& ds) {
        return to_py(to_json(evaluate(model, ds)));
    }, py::arg("model"), py::arg("dataset"));
    m.def("pseudo_label_metrics", [](const AdapterClassifier& model, const FeatureDataset& target, const FtspConfig& cfg) {
        const auto& labels = target.require_labels("pseudo_label_metrics");
        return to_py(to_json(pseudo_label_metrics(ftsp_pipeline(model, target.features, cfg), labels)));
    }, py::arg("model"), py::arg("target"), py::arg("config") = FtspConfig{});
    m.def("train_source", [](const SourceTrainConfig& cfg, const FeatureDataset& source) {
        std::optional<SourceTrainResult> r;
        {
            py::gil_scoped_release nogil;
            r = train_source(cfg, source);
        }
        return py::make_tuple(std::move(r->model), to_py(to_json(r->report)));
    }, py::arg("config"), py::arg("source"));
    m.def("adapt",
          [](const AdaptConfig& cfg, const AdapterClassifier& model, const FeatureDataset& target, bool monitor) {
              std::optional<AdaptResult> r;
              {
                  py::gil_scoped_release nogil;
                  const EpochMonitor mon = monitor ? make_label_monitor(target) : EpochMonitor{};
                  r = adapt(cfg, model, target.unlabeled_view(), mon);
              }
              return py::make_tuple(std::move(r->model), to_py(to_json(r->report)));
          },
          py::arg("config"), py::arg("model"), py::arg("target"), py::arg("monitor") = false,
          "Adapt `model` to the target features. With monitor=True the target labels are used only to score each epoch.");
}
