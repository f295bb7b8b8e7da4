#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "cxrkit/config.hpp"
#include "cxrkit/corpus.hpp"
#include "cxrkit/enrich.hpp"
#include "cxrkit/stats.hpp"

namespace cxrkit::commands {

struct Corpus {
    std::vector<ImageRecord> images;
    std::vector<QARecord> qas;
    std::vector<ExpertPrediction> experts;
};

// Loads whichever inputs the config names. Missing files raise IoError.
Corpus load_corpus(const RunConfig& cfg, bool need_experts);

// One instruction record per image with QAs, in image_id order.
std::vector<enrich::InstructionRecord> build_records(const Corpus& corpus,
                                                     std::span<const QARecord> qas,
                                                     enrich::Variant variant,
                                                     const RunConfig& cfg);

using ImageRefs = std::unordered_map<std::string, std::string>;  // image_id -> image reference

// One JSON object per line: {id, image, conversations:[{from, value}], variant, template_version}.
void write_instructions(std::ostream& out, std::span<const enrich::InstructionRecord> records,
                        const ImageRefs& refs = {});

// Score files "run_<k>.scores.jsonl" in a system directory, ordered by k.
stats::Runs load_runs(const std::filesystem::path& dir);

// Each command writes into cfg.out and logs a human-readable summary to `log`.
// Errors propagate as cxrkit::Error subclasses.
CorpusReport cmd_validate(const RunConfig& cfg, std::ostream& log);
void cmd_build(const RunConfig& cfg, std::ostream& log);
void cmd_split(const RunConfig& cfg, std::ostream& log);
void cmd_stats(const RunConfig& cfg, std::ostream& log);
void cmd_eval(const RunConfig& cfg, std::ostream& log);
void cmd_compare(const RunConfig& cfg, std::ostream& log);
void cmd_auc(const RunConfig& cfg, std::ostream& log);

}  // namespace cxrkit::commands
