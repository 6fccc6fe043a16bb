#include "doctest.h"
#include "support.hpp"

#include "commands.hpp"
#include "run_config.hpp"

#include "sfda/binary_io.hpp"
#include "sfda/data.hpp"
#include "sfda/model.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

using namespace sfda;
using namespace sfda::cli;

namespace {

const char* kSmallConfig = R"(# reduced run
seed = 11
[synth]
num_classes = 3
feature_dim = 6
samples_per_class_source = 30
samples_per_class_target = 20
cluster_stddev = 0.25
noise_scale_target = 0.25

[source]
epochs = 5
batch_size = 16
hidden_dim = 8

[adapt]
epochs = 2
batch_size = 16
)";

struct Run {
    std::ostringstream out;
    std::ostringstream err;
    CommandIo io() { return {out, err}; }
};

std::string slurp(const std::filesystem::path& p) {
    const auto bytes = io::read_file(p);
    return {bytes.begin(), bytes.end()};
}

GlobalOptions with_config(const std::filesystem::path& cfg) {
    GlobalOptions g;
    g.config = cfg;
    return g;
}

} // namespace

TEST_CASE("config parsing") {
    const RunConfig rc = parse_run_config(kSmallConfig);
    CHECK(rc.seed == 11u);
    CHECK(rc.synth.num_classes == 3);
    CHECK(rc.source.epochs == 5);
    CHECK(rc.adapt.epochs == 2);
    CHECK(rc.adapt.tsal.epochs == 2);
    CHECK(rc.adapt.ftsp.k == 3);

    try {
        parse_run_config("[synth]\nclas = 10\n");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("clas") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_run_config("[nope]\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("epochs = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[synth]\nnum_classes = ten\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[adapt]\nepochs = 3\n[tsal]\nepochs = 4\n").validate(), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[ftsp]\nclassifier = svm\n"), ConfigError);
    const RunConfig lda = parse_run_config("[ftsp]\nclassifier = lda ; trailing comment\n[tsal]\nepochs = 4\n");
    CHECK(lda.adapt.ftsp.classifier == TrustedClassifierKind::Lda);
    CHECK(lda.adapt.epochs == 4);
}

TEST_CASE("synth command") {
    test::TempDir dir("cli_synth");
    {
        std::ofstream(dir / "bad.ini") << "seed = 1\n[synth]\nclas = 10\n";
        Run r;
        CHECK(cmd_synth(with_config(dir / "bad.ini"), dir / "s", dir / "t", r.io()) == kValidationError);
        CHECK(r.err.str().find("clas") != std::string::npos);
    }
    {
        Run r;
        CHECK(cmd_synth(GlobalOptions{}, dir / "s", dir / "t", r.io()) == kValidationError);
    }
    GlobalOptions g;
    g.seed = 3;
    Run r;
    CHECK(cmd_synth(g, dir / "s1.tabf", dir / "t1.tabf", r.io()) == kOk);
    CHECK(r.out.str().find("N=2000 d=32 C=10") != std::string::npos);
    Run r2;
    CHECK(cmd_synth(g, dir / "s2.tabf", dir / "t2.tabf", r2.io()) == kOk);
    CHECK(io::read_file(dir / "s1.tabf") == io::read_file(dir / "s2.tabf"));
    CHECK(io::read_file(dir / "t1.tabf") == io::read_file(dir / "t2.tabf"));
    CHECK(nlohmann::json::parse(slurp(manifest_path(dir / "s1.tabf")))["n"] == 2000);

    Run missing;
    CHECK(cmd_synth(with_config(dir / "absent.ini"), dir / "x", dir / "y", missing.io()) == kIoError);
}

TEST_CASE("end-to-end commands") {
    test::TempDir dir("cli_e2e");
    std::ofstream(dir / "run.ini") << kSmallConfig;
    const GlobalOptions g = with_config(dir / "run.ini");
    {
        Run r;
        REQUIRE(cmd_synth(g, dir / "src.tabf", dir / "tgt.tabf", r.io()) == kOk);
    }

    // An unlabeled copy of the target.
    FeatureDataset unlabeled = load_dataset(dir / "tgt.tabf");
    unlabeled.labels.reset();
    save_dataset(unlabeled, dir / "tgt_u.tabf");
    {
        Run r;
        CHECK(cmd_train_source(g, dir / "tgt_u.tabf", dir / "m.tabm", std::nullopt, r.io()) == kValidationError);
    }
    {
        Run r;
        REQUIRE(cmd_train_source(g, dir / "src.tabf", dir / "m.tabm", std::nullopt, r.io()) == kOk);
        const AdapterClassifier m = load_checkpoint(dir / "m.tabm");
        CHECK(m.input_dim() == 6);
        CHECK(m.num_classes() == 3);
        const auto report = nlohmann::json::parse(slurp(dir / "m.tabm.report.json"));
        CHECK(report["epochs"].size() == 5);
    }
    {
        Run r;
        CHECK(cmd_pseudo_label(g, dir / "m.tabm", dir / "tgt.tabf", dir / "pl.csv", r.io()) == kOk);
        CHECK(r.out.str().find("pl_accuracy") != std::string::npos);
        const std::string csv = slurp(dir / "pl.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 61);
        CHECK(std::filesystem::exists(dir / "pl.csv.metrics.json"));
    }
    {
        Run r;
        CHECK(cmd_pseudo_label(g, dir / "m.tabm", dir / "tgt_u.tabf", dir / "plu.csv", r.io()) == kOk);
        CHECK(r.out.str().find("pl_accuracy") == std::string::npos);
        CHECK(!std::filesystem::exists(dir / "plu.csv.metrics.json"));
        const std::string csv = slurp(dir / "plu.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 61);
    }
    {
        Run a, b;
        REQUIRE(cmd_adapt(g, dir / "m.tabm", dir / "tgt.tabf", dir / "a1.tabm", dir / "a1.json", a.io()) == kOk);
        REQUIRE(cmd_adapt(g, dir / "m.tabm", dir / "tgt.tabf", dir / "a2.tabm", dir / "a2.json", b.io()) == kOk);
        CHECK(io::read_file(dir / "a1.tabm") == io::read_file(dir / "a2.tabm"));
        CHECK(slurp(dir / "a1.json") == slurp(dir / "a2.json"));
        CHECK(slurp(dir / "a1.csv") == slurp(dir / "a2.csv"));
        const auto report = nlohmann::json::parse(slurp(dir / "a1.json"));
        CHECK(report["epochs"].size() == 2);

        // The classifier block is the tail of the payload: C*h weights then C biases.
        const auto in = io::read_file(dir / "m.tabm");
        const auto out = io::read_file(dir / "a1.tabm");
        const std::size_t tail = 8 * (3 * 8 + 3);
        REQUIRE(in.size() == out.size());
        CHECK(std::equal(in.end() - static_cast<std::ptrdiff_t>(tail), in.end(),
                         out.end() - static_cast<std::ptrdiff_t>(tail)));
    }
    {
        Run r;
        CHECK(cmd_eval(g, dir / "a1.tabm", dir / "tgt.tabf", r.io()) == kOk);
        CHECK(r.out.str().rfind("accuracy ", 0) == 0);
        Run u;
        CHECK(cmd_eval(g, dir / "a1.tabm", dir / "tgt_u.tabf", u.io()) == kValidationError);
        Run j;
        GlobalOptions gj = g;
        gj.json = true;
        CHECK(cmd_eval(gj, dir / "a1.tabm", dir / "tgt.tabf", j.io()) == kOk);
        CHECK(nlohmann::json::parse(j.out.str())["per_class_accuracy"].size() == 3);
    }
    {
        // Corrupt checkpoint and missing files map to the I/O exit code.
        auto bytes = io::read_file(dir / "m.tabm");
        bytes[0] = 'Z';
        io::write_file(dir / "bad.tabm", bytes);
        Run r;
        CHECK(cmd_eval(g, dir / "bad.tabm", dir / "tgt.tabf", r.io()) == kIoError);
        Run m;
        CHECK(cmd_eval(g, dir / "nothing.tabm", dir / "tgt.tabf", m.io()) == kIoError);
    }
}

TEST_CASE("schedule command") {
    test::TempDir dir("cli_sched");
    Run r;
    CHECK(cmd_schedule(GlobalOptions{}, std::nullopt, r.io()) == kOk);
    std::istringstream in(r.out.str());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    REQUIRE(lines.size() == 16);
    CHECK(lines[1] == "0,1.0,0.5");
    CHECK(lines[15] == "14,1.5,1.0");

    Run f;
    CHECK(cmd_schedule(GlobalOptions{}, dir / "s.csv", f.io()) == kOk);
    CHECK(slurp(dir / "s.csv") == r.out.str());
}
