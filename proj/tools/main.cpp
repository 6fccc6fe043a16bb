#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
    using namespace sfda::cli;

    CLI::App app{"Source-free domain adaptation on feature datasets"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions global;
    std::string config_path;
    std::uint64_t seed = 0;
    auto* config_opt = app.add_option("--config", config_path, "Run configuration file");
    auto* seed_opt = app.add_option("--seed", seed, "Top-level seed (overrides the config file)");
    app.add_flag("--json", global.json, "Machine-readable stdout");

    std::string source, target, model, out_source, out_target, out_model, out_report, out_csv, data, report;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic shifted domain pair");
    synth->add_option("--out-source", out_source)->required();
    synth->add_option("--out-target", out_target)->required();

    auto* train = app.add_subcommand("train-source", "Fine-tune adapter and classifier on labeled source features");
    train->add_option("--source", source)->required();
    train->add_option("--out-model", out_model)->required();
    auto* report_opt = train->add_option("--report", report, "Report JSON (default <out-model>.report.json)");

    auto* pseudo = app.add_subcommand("pseudo-label", "Run one pseudo-labeling pass and export CSV");
    pseudo->add_option("--model", model)->required();
    pseudo->add_option("--target", target)->required();
    pseudo->add_option("--out-csv", out_csv)->required();

    auto* adapt = app.add_subcommand("adapt", "Adapt a source model to unlabeled target features");
    adapt->add_option("--model", model)->required();
    adapt->add_option("--target", target)->required();
    adapt->add_option("--out-model", out_model)->required();
    adapt->add_option("--out-report", out_report)->required();

    auto* eval = app.add_subcommand("eval", "Accuracy of a checkpoint on a labeled feature file");
    eval->add_option("--model", model)->required();
    eval->add_option("--data", data)->required();

    auto* schedule = app.add_subcommand("schedule", "Emit the per-epoch temperature schedule as CSV");
    auto* sched_out = schedule->add_option("--out-csv", out_csv, "Output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidationError;
    }

    if (config_opt->count() > 0) global.config = config_path;
    if (seed_opt->count() > 0) global.seed = seed;
    const CommandIo io{std::cout, std::cerr};

    if (synth->parsed()) return cmd_synth(global, out_source, out_target, io);
    if (train->parsed()) {
        return cmd_train_source(global, source, out_model,
                                report_opt->count() ? std::optional<std::filesystem::path>(report) : std::nullopt, io);
    }
    if (pseudo->parsed()) return cmd_pseudo_label(global, model, target, out_csv, io);
    if (adapt->parsed()) return cmd_adapt(global, model, target, out_model, out_report, io);
    if (eval->parsed()) return cmd_eval(global, model, data, io);
    if (schedule->parsed()) {
        return cmd_schedule(global, sched_out->count() ? std::optional<std::filesystem::path>(out_csv) : std::nullopt,
                            io);
    }
    return kValidationError;
}
