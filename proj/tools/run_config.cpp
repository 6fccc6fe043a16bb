#include "run_config.hpp"

#include "sfda/binary_io.hpp"
#include "sfda/errors.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

namespace sfda::cli {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename Int>
Int parse_int(const std::string& where, const std::string& v) {
    Int out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw ConfigError(where + ": expected an integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& where, const std::string& v) {
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
        throw ConfigError(where + ": expected a number, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& where, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError(where + ": expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& where, const std::string& value)>;
using KeyTable = std::map<std::string, Setter>;

template <typename T>
Setter int_field(T RunConfig::*part, auto field) {
    return [part, field](RunConfig& rc, const std::string& where, const std::string& v) {
        auto& target = (rc.*part).*field;
        target = parse_int<std::remove_reference_t<decltype(target)>>(where, v);
    };
}

template <typename T>
Setter real_field(T RunConfig::*part, double T::*field) {
    return [part, field](RunConfig& rc, const std::string& where, const std::string& v) {
        (rc.*part).*field = parse_double(where, v);
    };
}

template <typename T>
Setter bool_field(T RunConfig::*part, bool T::*field) {
    return [part, field](RunConfig& rc, const std::string& where, const std::string& v) {
        (rc.*part).*field = parse_bool(where, v);
    };
}

struct EpochFlags {
    bool adapt = false;
    bool tsal = false;
};

std::map<std::string, KeyTable> build_tables(EpochFlags& flags) {
    std::map<std::string, KeyTable> t;
    using R = RunConfig;
    t["synth"] = {
        {"num_classes", int_field(&R::synth, &SynthShiftConfig::num_classes)},
        {"feature_dim", int_field(&R::synth, &SynthShiftConfig::feature_dim)},
        {"samples_per_class_source", int_field(&R::synth, &SynthShiftConfig::samples_per_class_source)},
        {"samples_per_class_target", int_field(&R::synth, &SynthShiftConfig::samples_per_class_target)},
        {"cluster_stddev", real_field(&R::synth, &SynthShiftConfig::cluster_stddev)},
        {"rotation_angle", real_field(&R::synth, &SynthShiftConfig::rotation_angle)},
        {"translation_scale", real_field(&R::synth, &SynthShiftConfig::translation_scale)},
        {"noise_scale_target", real_field(&R::synth, &SynthShiftConfig::noise_scale_target)},
    };
    t["source"] = {
        {"epochs", int_field(&R::source, &SourceTrainConfig::epochs)},
        {"batch_size", int_field(&R::source, &SourceTrainConfig::batch_size)},
        {"lr0", real_field(&R::source, &SourceTrainConfig::lr0)},
        {"label_smoothing", real_field(&R::source, &SourceTrainConfig::label_smoothing)},
        {"train_fraction", real_field(&R::source, &SourceTrainConfig::train_fraction)},
        {"hidden_dim", int_field(&R::source, &SourceTrainConfig::hidden_dim)},
        {"activation",
         [](R& rc, const std::string& where, const std::string& v) {
             try {
                 rc.source.activation = parse_activation(v);
             } catch (const InvalidArgument& e) {
                 throw ConfigError(where + ": " + e.what());
             }
         }},
        {"momentum", [](R& rc, const std::string& w, const std::string& v) { rc.source.optim.momentum = parse_double(w, v); }},
        {"weight_decay", [](R& rc, const std::string& w, const std::string& v) { rc.source.optim.weight_decay = parse_double(w, v); }},
        {"nesterov", [](R& rc, const std::string& w, const std::string& v) { rc.source.optim.nesterov = parse_bool(w, v); }},
        {"clip_norm", [](R& rc, const std::string& w, const std::string& v) { rc.source.optim.clip_norm = parse_double(w, v); }},
    };
    t["adapt"] = {
        {"epochs",
         [&flags](R& rc, const std::string& w, const std::string& v) {
             rc.adapt.epochs = parse_int<std::size_t>(w, v);
             flags.adapt = true;
         }},
        {"batch_size", int_field(&R::adapt, &AdaptConfig::batch_size)},
        {"lr0", real_field(&R::adapt, &AdaptConfig::lr0)},
        {"mixup", bool_field(&R::adapt, &AdaptConfig::mixup_enabled)},
        {"mixup_beta", real_field(&R::adapt, &AdaptConfig::mixup_beta)},
        {"momentum", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.optim.momentum = parse_double(w, v); }},
        {"weight_decay", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.optim.weight_decay = parse_double(w, v); }},
        {"nesterov", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.optim.nesterov = parse_bool(w, v); }},
        {"clip_norm", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.optim.clip_norm = parse_double(w, v); }},
    };
    t["ftsp"] = {
        {"k", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.k = parse_int<std::size_t>(w, v); }},
        {"classifier",
         [](R& rc, const std::string& where, const std::string& v) {
             try {
                 rc.adapt.ftsp.classifier = parse_trusted_classifier(v);
             } catch (const InvalidArgument& e) {
                 throw ConfigError(where + ": " + e.what());
             }
         }},
        {"mlr_l2_lambda", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.mlr_l2_lambda = parse_double(w, v); }},
        {"mlr_max_iter", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.mlr_max_iter = parse_int<std::size_t>(w, v); }},
        {"mlr_grad_tol", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.mlr_grad_tol = parse_double(w, v); }},
        {"lda_shrinkage", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.lda_shrinkage = parse_double(w, v); }},
        {"deletion_frac", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.deletion_frac = parse_double(w, v); }},
        {"rbf_gamma", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.spreading.rbf_gamma = parse_double(w, v); }},
        {"spreading_alpha", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.spreading.alpha = parse_double(w, v); }},
        {"spreading_max_iter", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.spreading.max_iter = parse_int<std::size_t>(w, v); }},
        {"spreading_tol", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.spreading.tol = parse_double(w, v); }},
        {"refinement", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.ftsp.refinement_enabled = parse_bool(w, v); }},
    };
    t["tsal"] = {
        {"alpha", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.tsal.alpha = parse_double(w, v); }},
        {"smoothing", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.tsal.smoothing = parse_double(w, v); }},
        {"tau_dis_start", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.tsal.tau_dis_start = parse_double(w, v); }},
        {"tau_dis_end", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.tsal.tau_dis_end = parse_double(w, v); }},
        {"tau_div_start", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.tsal.tau_div_start = parse_double(w, v); }},
        {"tau_div_end", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.tsal.tau_div_end = parse_double(w, v); }},
        {"epochs",
         [&flags](R& rc, const std::string& w, const std::string& v) {
             rc.adapt.tsal.epochs = parse_int<std::size_t>(w, v);
             flags.tsal = true;
         }},
        {"detach_target", [](R& rc, const std::string& w, const std::string& v) { rc.adapt.tsal.detach_target = parse_bool(w, v); }},
    };
    return t;
}

} // namespace

std::uint64_t RunConfig::require_seed() const {
    if (!seed) {
        throw ConfigError("seed: an explicit top-level seed (or --seed) is required");
    }
    return *seed;
}

void RunConfig::apply_seed(std::uint64_t s) {
    seed = s;
    synth.seed = derive_seed(s, "synth");
    source.seed = derive_seed(s, "source");
    adapt.seed = derive_seed(s, "adapt");
}

void RunConfig::validate() const {
    try {
        synth.validate();
        source.validate();
        adapt.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig rc;
    EpochFlags flags;
    const auto tables = build_tables(flags);
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string at = "line " + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(at + ": malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (!tables.contains(section)) throw ConfigError(at + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(at + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            if (key != "seed") throw ConfigError(at + ": unknown top-level key '" + key + "'");
            rc.seed = parse_int<std::uint64_t>("seed", value);
            continue;
        }
        const auto& table = tables.at(section);
        const auto it = table.find(key);
        const std::string where = "[" + section + "] " + key;
        if (it == table.end()) throw ConfigError(at + ": unknown key '" + key + "' in [" + section + "]");
        it->second(rc, where, value);
    }
    // One epoch count drives both the loop and the temperature schedule unless both are given.
    if (flags.adapt && !flags.tsal) rc.adapt.tsal.epochs = rc.adapt.epochs;
    if (flags.tsal && !flags.adapt) rc.adapt.epochs = rc.adapt.tsal.epochs;
    if (rc.seed) rc.apply_seed(*rc.seed);
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return parse_run_config(std::string(bytes.begin(), bytes.end()));
}

} // namespace sfda::cli
