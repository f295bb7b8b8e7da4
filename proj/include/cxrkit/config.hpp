#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "cxrkit/client.hpp"
#include "cxrkit/enrich.hpp"
#include "cxrkit/ingest.hpp"
#include "cxrkit/metrics.hpp"
#include "cxrkit/split.hpp"
#include "cxrkit/stats.hpp"

namespace cxrkit {

struct EndpointConfig {
    std::string mode = "http";  // http | file
    std::string url;
    std::filesystem::path dir;
    std::string command;
    std::size_t shard_size = 0;
    std::size_t concurrency = 4;
    int retry_attempts = 3;
    long backoff_ms = 1000;
    long timeout_s = 600;
};

struct RunConfig {
    // inputs
    std::filesystem::path images;
    std::filesystem::path qas;
    std::filesystem::path experts;
    std::filesystem::path manifest;
    ingest::SchemaConfig schema;

    // enrichment
    double threshold = enrich::kDefaultThreshold;
    enrich::BuildOptions build_options;

    // split
    split::SplitConfig split;
    std::filesystem::path test_patients_file;

    // build
    std::string build_variant = "both";  // basic | enhanced | both
    std::string build_partition = "all";  // all | train | test | extended_test

    // eval
    std::string system = "system";
    std::string eval_variant = "basic";
    std::string eval_partition = "test";
    std::size_t runs = 3;
    std::optional<client::OracleSpec> oracle;
    std::filesystem::path lookup_file;
    std::optional<EndpointConfig> endpoint;
    metrics::ScoreOptions score;

    // compare
    std::filesystem::path scores_a;
    std::filesystem::path scores_b;
    std::string label_a = "A";
    std::string label_b = "B";
    stats::CompareOptions compare;

    // auc
    std::filesystem::path auc_input;

    std::uint64_t seed = 0;
    std::filesystem::path out = "out";
};

// Relative paths are resolved against base_dir.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& file);

// Semantic settings only: paths and the output directory are left out so that relocating a
// run does not change its identity.
nlohmann::json config_to_json(const RunConfig& cfg);

// Hash of the semantic settings plus the bytes of every configured input file.
std::string config_fingerprint(const RunConfig& cfg);

// Parses "--oracle" values: echo_gt | constant:<text> | lookup | expert_threshold.
client::OracleSpec parse_oracle_flag(const std::string& flag);

// Parses "--endpoint" values: http(s)://... | file:<dir>[:<command>]
EndpointConfig parse_endpoint_flag(const std::string& flag);

}  // namespace cxrkit
