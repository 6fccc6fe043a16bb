#include "commands.hpp"

#include "run_config.hpp"

#include "sfda/binary_io.hpp"
#include "sfda/errors.hpp"
#include "sfda/report.hpp"

#include <functional>
#include <sstream>

namespace sfda::cli {

namespace {

RunConfig resolve_config(const GlobalOptions& g) {
    RunConfig rc = g.config ? load_run_config(*g.config) : RunConfig{};
    if (g.seed) {
        rc.apply_seed(*g.seed);
    }
    rc.validate();
    return rc;
}

// Maps the library's error types onto the exit-code contract.
int guarded(CommandIo io, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        io.err << "config error: " << e.what() << '\n';
        return kValidationError;
    } catch (const FormatError& e) {
        io.err << "format error: " << e.what() << '\n';
        return kIoError;
    } catch (const IoError& e) {
        io.err << "i/o error: " << e.what() << '\n';
        return kIoError;
    } catch (const InvalidArgument& e) {
        io.err << "invalid argument: " << e.what() << '\n';
        return kValidationError;
    } catch (const ContractError& e) {
        io.err << "contract error: " << e.what() << '\n';
        return kValidationError;
    } catch (const NumericError& e) {
        io.err << "numeric error: " << e.what() << '\n';
        return kValidationError;
    }
}

std::string summary(const FeatureDataset& ds) {
    std::ostringstream s;
    s << ds.domain_name << ": N=" << ds.size() << " d=" << ds.dim() << " C=" << ds.num_classes
      << (ds.labeled() ? " labeled" : " unlabeled");
    return s.str();
}

Json dataset_json(const FeatureDataset& ds, const std::filesystem::path& path) {
    return {{"path", path.string()}, {"name", ds.domain_name}, {"n", ds.size()},
            {"d", ds.dim()},         {"c", ds.num_classes},   {"labeled", ds.labeled()}};
}

void check_model_matches(const AdapterClassifier& m, const FeatureDataset& ds) {
    if (m.input_dim() != ds.dim()) {
        throw InvalidArgument("model expects d=" + std::to_string(m.input_dim()) + " but data has d=" +
                              std::to_string(ds.dim()));
    }
    if (m.num_classes() != static_cast<std::size_t>(ds.num_classes)) {
        throw InvalidArgument("model has C=" + std::to_string(m.num_classes()) + " but data has C=" +
                              std::to_string(ds.num_classes));
    }
}

} // namespace

std::filesystem::path report_csv_path(const std::filesystem::path& report_json) {
    std::filesystem::path p = report_json;
    p.replace_extension(".csv");
    if (p == report_json) {
        p += ".csv";
    }
    return p;
}

int cmd_synth(const GlobalOptions& g, const std::filesystem::path& out_source,
              const std::filesystem::path& out_target, CommandIo io) {
    return guarded(io, [&] {
        RunConfig rc = resolve_config(g);
        rc.require_seed();
        const DomainPair pair = synth_domain_pair(rc.synth);
        save_dataset(pair.source, out_source);
        save_dataset(pair.target, out_target);
        if (g.json) {
            io.out << Json{{"source", dataset_json(pair.source, out_source)},
                           {"target", dataset_json(pair.target, out_target)},
                           {"config", to_json(rc.synth)}}
                          .dump()
                   << '\n';
        } else {
            io.out << summary(pair.source) << " -> " << out_source.string() << '\n'
                   << summary(pair.target) << " -> " << out_target.string() << '\n';
        }
        return kOk;
    });
}

int cmd_train_source(const GlobalOptions& g, const std::filesystem::path& source_path,
                     const std::filesystem::path& out_model,
                     const std::optional<std::filesystem::path>& report_path, CommandIo io) {
    return guarded(io, [&] {
        RunConfig rc = resolve_config(g);
        rc.require_seed();
        const FeatureDataset source = load_dataset(source_path);
        source.require_labels("train-source");
        const SourceTrainResult result = train_source(rc.source, source);
        save_checkpoint(result.model, out_model);
        const auto report_file = report_path.value_or(std::filesystem::path(out_model.string() + ".report.json"));
        const Json report = to_json(result.report);
        io::write_text(report_file, report.dump(2) + "\n");
        if (g.json) {
            io.out << Json{{"model", out_model.string()},
                           {"report", report_file.string()},
                           {"best_epoch", result.report.best_epoch},
                           {"best_val_accuracy", result.report.best_val_accuracy}}
                          .dump()
                   << '\n';
        } else {
            io.out << "best validation accuracy " << format_real(result.report.best_val_accuracy)
                   << " at epoch " << result.report.best_epoch << " -> " << out_model.string() << '\n';
        }
        return kOk;
    });
}

int cmd_pseudo_label(const GlobalOptions& g, const std::filesystem::path& model_path,
                     const std::filesystem::path& target_path, const std::filesystem::path& out_csv,
                     CommandIo io) {
    return guarded(io, [&] {
        const RunConfig rc = resolve_config(g);
        const AdapterClassifier model = load_checkpoint(model_path);
        const FeatureDataset target = load_dataset(target_path);
        check_model_matches(model, target);
        const PseudoLabelSet pls = ftsp_pipeline(model, target.features, rc.adapt.ftsp);
        std::ostringstream csv;
        write_pseudo_label_csv(csv, pls);
        io::write_text(out_csv, csv.str());

        Json out = {{"csv", out_csv.string()}, {"n", pls.size()}, {"isolated", pls.isolated_count}};
        if (target.labeled()) {
            const PseudoLabelMetrics m = pseudo_label_metrics(pls, *target.labels);
            out["metrics"] = to_json(m);
            io::write_text(std::filesystem::path(out_csv.string() + ".metrics.json"), out["metrics"].dump(2) + "\n");
            if (!g.json) {
                io.out << "pl_accuracy " << format_real(m.pl_accuracy) << '\n'
                       << "retained_pl_accuracy " << format_real(m.retained_pl_accuracy) << '\n'
                       << "trusted_precision " << format_real(m.trusted_precision) << '\n';
            }
        }
        if (g.json) {
            io.out << out.dump() << '\n';
        } else {
            io.out << pls.size() << " pseudo-labels -> " << out_csv.string() << '\n';
        }
        return kOk;
    });
}

int cmd_adapt(const GlobalOptions& g, const std::filesystem::path& model_path,
              const std::filesystem::path& target_path, const std::filesystem::path& out_model,
              const std::filesystem::path& out_report, CommandIo io) {
    return guarded(io, [&] {
        RunConfig rc = resolve_config(g);
        rc.require_seed();
        const AdapterClassifier model = load_checkpoint(model_path);
        const FeatureDataset target = load_dataset(target_path);
        check_model_matches(model, target);
        // Labels, when the file has them, only reach the per-epoch monitor.
        const EpochMonitor monitor = target.labeled() ? make_label_monitor(target) : EpochMonitor{};
        const AdaptResult result = adapt(rc.adapt, model, target.unlabeled_view(), monitor);
        save_checkpoint(result.model, out_model);
        io::write_text(out_report, to_json(result.report).dump(2) + "\n");
        io::write_text(report_csv_path(out_report), run_report_csv(result.report));
        if (g.json) {
            Json out = {{"model", out_model.string()},
                        {"report", out_report.string()},
                        {"epochs", result.report.epochs.size()}};
            out["target_accuracy"] = result.report.final_target_accuracy
                                         ? Json(*result.report.final_target_accuracy)
                                         : Json(nullptr);
            io.out << out.dump() << '\n';
        } else {
            io.out << "adapted for " << result.report.epochs.size() << " epochs -> " << out_model.string() << '\n';
            if (result.report.final_target_accuracy) {
                io.out << "target accuracy " << format_real(*result.report.final_target_accuracy) << '\n';
            }
        }
        return kOk;
    });
}

int cmd_eval(const GlobalOptions& g, const std::filesystem::path& model_path,
             const std::filesystem::path& labeled_path, CommandIo io) {
    return guarded(io, [&] {
        if (g.config) {
            resolve_config(g);
        }
        const AdapterClassifier model = load_checkpoint(model_path);
        const FeatureDataset ds = load_dataset(labeled_path);
        ds.require_labels("eval");
        check_model_matches(model, ds);
        const EvalMetrics m = evaluate(model, ds);
        if (g.json) {
            io.out << to_json(m).dump() << '\n';
        } else {
            io.out << "accuracy " << format_real(m.accuracy) << '\n';
            for (std::size_t c = 0; c < m.per_class_accuracy.size(); ++c) {
                io.out << "class " << c << ' ' << format_real(m.per_class_accuracy[c]) << '\n';
            }
        }
        return kOk;
    });
}

int cmd_schedule(const GlobalOptions& g, const std::optional<std::filesystem::path>& out_csv, CommandIo io) {
    return guarded(io, [&] {
        const RunConfig rc = resolve_config(g);
        const std::string csv = schedule_csv(rc.adapt.tsal);
        if (out_csv) {
            io::write_text(*out_csv, csv);
            if (g.json) {
                io.out << Json{{"csv", out_csv->string()}, {"epochs", rc.adapt.tsal.epochs}}.dump() << '\n';
            }
        } else {
            io.out << csv;
        }
        return kOk;
    });
}

} // namespace sfda::cli
