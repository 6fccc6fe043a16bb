#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

namespace sfda::cli {

/// Stable exit codes.
enum ExitCode : int { kOk = 0, kValidationError = 1, kIoError = 2 };

struct GlobalOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    bool json = false;
};

struct CommandIo {
    std::ostream& out;
    std::ostream& err;
};

int cmd_synth(const GlobalOptions& g, const std::filesystem::path& out_source,
              const std::filesystem::path& out_target, CommandIo io);

/// `report_path` defaults to `<out_model>.report.json`.
int cmd_train_source(const GlobalOptions& g, const std::filesystem::path& source_path,
                     const std::filesystem::path& out_model,
                     const std::optional<std::filesystem::path>& report_path, CommandIo io);

int cmd_pseudo_label(const GlobalOptions& g, const std::filesystem::path& model_path,
                     const std::filesystem::path& target_path, const std::filesystem::path& out_csv,
                     CommandIo io);

/// Writes the JSON report to `out_report` and the per-epoch CSV next to it
/// with a `.csv` extension.
int cmd_adapt(const GlobalOptions& g, const std::filesystem::path& model_path,
              const std::filesystem::path& target_path, const std::filesystem::path& out_model,
              const std::filesystem::path& out_report, CommandIo io);

int cmd_eval(const GlobalOptions& g, const std::filesystem::path& model_path,
             const std::filesystem::path& labeled_path, CommandIo io);

/// Writes to `out_csv`, or to io.out when absent.
int cmd_schedule(const GlobalOptions& g, const std::optional<std::filesystem::path>& out_csv, CommandIo io);

std::filesystem::path report_csv_path(const std::filesystem::path& report_json);

} // namespace sfda::cli
