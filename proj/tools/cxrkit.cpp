// cxrkit: build expert-enhanced CXR instruction data and evaluate answer-producing systems.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cxrkit/commands.hpp"
#include "cxrkit/config.hpp"
#include "cxrkit/error.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::string> out, variant, oracle, endpoint, images, qas, experts, manifest,
        system, partition, scores_a, scores_b, label_a, label_b, input;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs;
    std::optional<double> threshold;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON run configuration");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--seed", f.seed, "seed for patient sampling (recorded in outputs)");
    cmd->add_option("--images", f.images, "image metadata table");
    cmd->add_option("--qas", f.qas, "QA table");
    cmd->add_option("--experts", f.experts, "expert prediction records (JSON lines)");
    cmd->add_option("--manifest", f.manifest, "split manifest produced by `split`");
    cmd->add_option("--threshold", f.threshold, "disease probability threshold");
}

cxrkit::RunConfig resolve(const Flags& f, const std::string& subcommand) {
    cxrkit::RunConfig cfg = f.config.empty() ? cxrkit::RunConfig{} : cxrkit::load_config(f.config);
    if (f.out) cfg.out = *f.out;
    if (f.seed) {
        cfg.seed = *f.seed;
        cfg.split.seed = *f.seed;
    }
    if (f.images) cfg.images = *f.images;
    if (f.qas) cfg.qas = *f.qas;
    if (f.experts) cfg.experts = *f.experts;
    if (f.manifest) cfg.manifest = *f.manifest;
    if (f.threshold) {
        cfg.threshold = *f.threshold;
        if (cfg.oracle) cfg.oracle->threshold = *f.threshold;
    }
    if (f.variant) (subcommand == "build" ? cfg.build_variant : cfg.eval_variant) = *f.variant;
    if (f.partition) (subcommand == "build" ? cfg.build_partition : cfg.eval_partition) = *f.partition;
    if (f.oracle) {
        cfg.oracle = cxrkit::parse_oracle_flag(*f.oracle);
        if (f.threshold) cfg.oracle->threshold = *f.threshold;
        cfg.endpoint.reset();
    }
    if (f.endpoint) {
        cfg.endpoint = cxrkit::parse_endpoint_flag(*f.endpoint);
        cfg.oracle.reset();
    }
    if (f.runs) cfg.runs = *f.runs;
    if (f.system) cfg.system = *f.system;
    if (f.scores_a) cfg.scores_a = *f.scores_a;
    if (f.scores_b) cfg.scores_b = *f.scores_b;
    if (f.label_a) cfg.label_a = *f.label_a;
    if (f.label_b) cfg.label_b = *f.label_b;
    if (f.input) cfg.auc_input = *f.input;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Expert-enhanced CXR instruction data builder and VQA evaluation harness"};
    app.require_subcommand(1);
    Flags f;

    auto* validate = app.add_subcommand("validate", "check referential integrity of the inputs");
    auto* stats = app.add_subcommand("stats", "per-category dataset statistics");
    auto* split = app.add_subcommand("split", "one-image-per-patient test split manifest");
    auto* build = app.add_subcommand("build", "write basic and/or enhanced instruction files");
    auto* eval = app.add_subcommand("eval", "score an oracle or endpoint over N runs");
    auto* compare = app.add_subcommand("compare", "paired comparison report of two systems");
    auto* auc = app.add_subcommand("auc", "per-condition AUC table for expert scores");

    for (auto* cmd : {validate, stats, split, build, eval, compare, auc}) add_common(cmd, f);
    for (auto* cmd : {build, eval}) {
        cmd->add_option("--variant", f.variant, "basic | enhanced (build also accepts both)");
        cmd->add_option("--partition", f.partition, "all | train | test | extended_test");
    }
    eval->add_option("--oracle", f.oracle, "echo_gt | constant:<text> | lookup | expert_threshold");
    eval->add_option("--endpoint", f.endpoint, "http(s)://host/path or file:<dir>[:<command>]");
    eval->add_option("--runs", f.runs, "number of inference runs");
    eval->add_option("--system", f.system, "system name (output subdirectory)");
    compare->add_option("--a", f.scores_a, "score directory of system A");
    compare->add_option("--b", f.scores_b, "score directory of system B");
    compare->add_option("--label-a", f.label_a, "column label for A");
    compare->add_option("--label-b", f.label_b, "column label for B");
    auc->add_option("--input", f.input, "CSV with <condition>_score/<condition>_label columns");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        const auto cfg = resolve(f, name);
        if (name == "validate") {
            const auto rep = cxrkit::commands::cmd_validate(cfg, std::cout);
            return rep.valid() ? 0 : static_cast<int>(cxrkit::ErrorKind::validation);
        }
        if (name == "stats") cxrkit::commands::cmd_stats(cfg, std::cout);
        if (name == "split") cxrkit::commands::cmd_split(cfg, std::cout);
        if (name == "build") cxrkit::commands::cmd_build(cfg, std::cout);
        if (name == "eval") cxrkit::commands::cmd_eval(cfg, std::cout);
        if (name == "compare") cxrkit::commands::cmd_compare(cfg, std::cout);
        if (name == "auc") cxrkit::commands::cmd_auc(cfg, std::cout);
        return 0;
    } catch (const cxrkit::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(cxrkit::ErrorKind::io);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
