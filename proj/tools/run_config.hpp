#pragma once

#include "sfda/data.hpp"
#include "sfda/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace sfda::cli {

/// Rejected config text; the message names the offending section and key.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Everything a run needs, with per-module defaults for omitted fields.
struct RunConfig {
    std::optional<std::uint64_t> seed;
    SynthShiftConfig synth;
    SourceTrainConfig source;
    AdaptConfig adapt;

    /// Top-level seed or ConfigError.
    std::uint64_t require_seed() const;
    /// Fans the top-level seed out to each stage (seed + stage tag).
    void apply_seed(std::uint64_t seed);
    /// Runs every owning module's validation, wrapping failures as ConfigError.
    void validate() const;
};

/// Parses the sectioned key = value format:
///
///     seed = 7
///     [synth]
///     num_classes = 10
///
/// `#` and `;` start comments. Unknown sections or keys are rejected.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

} // namespace sfda::cli
