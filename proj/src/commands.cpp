#include "cxrkit/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "cxrkit/client.hpp"
#include "cxrkit/error.hpp"
#include "cxrkit/ingest.hpp"
#include "cxrkit/metrics.hpp"
#include "cxrkit/report.hpp"
#include "cxrkit/split.hpp"
#include "cxrkit/text.hpp"

namespace cxrkit::commands {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::ifstream open_input(const fs::path& p, const char* what) {
    if (p.empty()) throw IoError(std::string("no ") + what + " input configured");
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError(std::string("cannot open ") + what + " file " + p.string());
    return in;
}

void write_file(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << content;
    if (!out) throw IoError("failed writing " + p.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

split::SplitConfig effective_split_config(const RunConfig& cfg) {
    split::SplitConfig sc = cfg.split;
    if (!cfg.test_patients_file.empty()) {
        auto in = open_input(cfg.test_patients_file, "test patient list");
        std::string line;
        while (std::getline(in, line)) {
            const auto id = text::trim(line);
            if (!id.empty()) sc.test_patient_ids.emplace(id);
        }
    }
    return sc;
}

split::SplitManifest resolve_manifest(const RunConfig& cfg, const Corpus& corpus) {
    if (!cfg.manifest.empty()) {
        auto in = open_input(cfg.manifest, "split manifest");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& ex) {
            throw ParseError("malformed split manifest: " + std::string(ex.what()));
        }
        auto m = split::manifest_from_json(j);
        split::check_manifest(m, corpus.images);
        return m;
    }
    auto m = split::make_split(corpus.images, effective_split_config(cfg));
    split::check_manifest(m, corpus.images);
    return m;
}

std::vector<QARecord> partition_qas(const RunConfig& cfg, const Corpus& corpus,
                                    const std::vector<QARecord>& filtered,
                                    const std::string& partition) {
    if (partition == "all") return filtered;
    const auto m = resolve_manifest(cfg, corpus);
    return split::select_qas(m, filtered, split::parse_partition(partition));
}

std::vector<enrich::Variant> build_variants(const std::string& v) {
    if (v == "both") return {enrich::Variant::basic, enrich::Variant::enhanced};
    return {enrich::parse_variant(v)};
}

std::string image_ref(const ImageRecord& img) {
    return img.image_path.empty() ? img.image_id : img.image_path;
}

struct Grouped {
    std::map<std::string, std::vector<QARecord>> by_image;  // image_id order
};

Grouped group_by_image(std::span<const QARecord> qas) {
    Grouped g;
    for (const auto& qa : qas) g.by_image[qa.image_id].push_back(qa);
    return g;
}

std::set<std::string> image_ids_of(std::span<const QARecord> qas) {
    std::set<std::string> out;
    for (const auto& qa : qas) out.insert(qa.image_id);
    return out;
}

json stats_json(const std::string& label, std::span<const QARecord> qas,
                const std::set<std::string>& images, std::ostream& log) {
    const auto s = split::summarize(qas, images);
    log << split::render_stats(label, s);
    return split::to_json(s);
}

}  // namespace

Corpus load_corpus(const RunConfig& cfg, bool need_experts) {
    Corpus c;
    {
        auto in = open_input(cfg.images, "image metadata");
        c.images = ingest::parse_image_metadata(in, cfg.schema.images);
    }
    {
        auto in = open_input(cfg.qas, "QA table");
        c.qas = ingest::parse_qa_table(in, cfg.schema.qas);
    }
    if (need_experts || !cfg.experts.empty()) {
        auto in = open_input(cfg.experts, "expert prediction");
        c.experts = ingest::parse_expert_predictions(in);
    }
    return c;
}

std::vector<enrich::InstructionRecord> build_records(const Corpus& corpus,
                                                     std::span<const QARecord> qas,
                                                     enrich::Variant variant,
                                                     const RunConfig& cfg) {
    std::unordered_map<std::string, const ImageRecord*> images;
    for (const auto& img : corpus.images) images.emplace(img.image_id, &img);
    std::unordered_map<std::string, const ExpertPrediction*> experts;
    for (const auto& e : corpus.experts) experts.emplace(e.image_id, &e);

    std::vector<enrich::InstructionRecord> out;
    for (const auto& [image_id, group] : group_by_image(qas).by_image) {
        const auto img = images.find(image_id);
        if (img == images.end()) throw ContractError("QA references unknown image " + image_id);
        if (variant == enrich::Variant::basic) {
            out.push_back(enrich::build_basic(*img->second, group, cfg.build_options));
            continue;
        }
        const auto e = experts.find(image_id);
        if (e == experts.end()) throw ContractError("no expert prediction for image " + image_id);
        const auto ctx = enrich::render_expert_context(*e->second, cfg.threshold);
        auto rec = enrich::build_enhanced(*img->second, group, ctx, cfg.build_options);
        out.push_back(std::move(rec));
    }
    return out;
}

void write_instructions(std::ostream& out, std::span<const enrich::InstructionRecord> records,
                        const ImageRefs& refs) {
    for (const auto& r : records) {
        const auto ref = refs.find(r.image_id);
        json conv = json::array();
        for (const auto& t : r.turns)
            conv.push_back(json{{"from", std::string(enrich::to_string(t.speaker))}, {"value", t.text}});
        out << json{{"id", r.id},
                    {"image", ref == refs.end() ? r.image_id : ref->second},
                    {"conversations", std::move(conv)},
                    {"variant", std::string(enrich::to_string(r.variant))},
                    {"template_version", std::string(enrich::kTemplateVersion)}}
                   .dump()
            << '\n';
    }
}

stats::Runs load_runs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("score directory not found: " + dir.string());
    static const std::regex pattern(R"(run_(\d+)\.scores\.jsonl)");
    std::vector<std::pair<long, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern)) files.emplace_back(std::stol(m[1].str()), entry.path());
    }
    if (files.empty()) throw IoError("no run_<k>.scores.jsonl files in " + dir.string());
    std::sort(files.begin(), files.end());
    stats::Runs runs;
    for (const auto& [k, p] : files) {
        auto in = open_input(p, "score");
        runs.push_back(metrics::read_scores(in));
    }
    return runs;
}

CorpusReport cmd_validate(const RunConfig& cfg, std::ostream& log) {
    const auto corpus = load_corpus(cfg, false);
    auto rep = validate(corpus.images, corpus.qas, corpus.experts);
    json j{{"valid", rep.valid()},
           {"counts", {{"images", rep.image_count}, {"qas", rep.qa_count}, {"experts", rep.expert_count}}},
           {"dangling", json::array()},
           {"duplicates", json::array()},
           {"invalid", json::array()},
           {"seed", cfg.seed}};
    for (const auto& d : rep.dangling)
        j["dangling"].push_back({{"kind", d.kind}, {"record_id", d.record_id}, {"image_id", d.image_id}});
    for (const auto& d : rep.duplicates)
        j["duplicates"].push_back({{"kind", d.kind}, {"id", d.id}, {"occurrences", d.occurrences}});
    for (const auto& d : rep.invalid)
        j["invalid"].push_back({{"kind", d.kind}, {"id", d.id}, {"reason", d.reason}});
    write_file(cfg.out / "validation.json", dump(j));
    log << (rep.valid() ? "corpus valid: " : "corpus INVALID: ") << rep.summary() << '\n';
    return rep;
}

void cmd_build(const RunConfig& cfg, std::ostream& log) {
    const auto variants = build_variants(cfg.build_variant);
    const bool need_experts =
        std::find(variants.begin(), variants.end(), enrich::Variant::enhanced) != variants.end();
    auto corpus = load_corpus(cfg, need_experts);
    require_valid(validate(corpus.images, corpus.qas, corpus.experts));

    const auto filtered = split::filter_categories(corpus.qas, cfg.split.drop_categories);
    const auto qas = partition_qas(cfg, corpus, filtered, cfg.build_partition);

    ImageRefs refs;
    for (const auto& img : corpus.images) refs.emplace(img.image_id, image_ref(img));

    json files = json::object();
    for (auto v : variants) {
        const auto records = build_records(corpus, qas, v, cfg);
        std::ostringstream os;
        write_instructions(os, records, refs);
        const std::string name = "instructions_" + std::string(enrich::to_string(v)) + ".jsonl";
        write_file(cfg.out / name, os.str());
        files[std::string(enrich::to_string(v))] = {{"file", name}, {"records", records.size()}};
        log << "wrote " << records.size() << " " << enrich::to_string(v) << " conversations to "
            << (cfg.out / name).string() << '\n';
    }
    json meta{{"seed", cfg.seed},
              {"config_fingerprint", config_fingerprint(cfg)},
              {"template_version", std::string(enrich::kTemplateVersion)},
              {"partition", cfg.build_partition},
              {"outputs", std::move(files)},
              {"stats", stats_json("build " + cfg.build_partition, qas, image_ids_of(qas), log)}};
    write_file(cfg.out / "build_meta.json", dump(meta));
}

void cmd_split(const RunConfig& cfg, std::ostream& log) {
    const auto corpus = load_corpus(cfg, false);
    auto manifest = split::make_split(corpus.images, effective_split_config(cfg));
    split::check_manifest(manifest, corpus.images);
    write_file(cfg.out / "split_manifest.json", dump(split::to_json(manifest)));
    log << "split fingerprint " << manifest.fingerprint << ": train "
        << manifest.train_image_ids.size() << " images, test " << manifest.test_image_ids.size()
        << ", extended test " << manifest.extended_test_image_ids.size() << '\n';

    const auto filtered = split::filter_categories(corpus.qas, manifest.config.drop_categories);
    json j{{"seed", cfg.seed}, {"fingerprint", manifest.fingerprint}};
    for (auto p : {split::Partition::train, split::Partition::test, split::Partition::extended_test}) {
        const auto qas = split::select_qas(manifest, filtered, p);
        j[std::string(split::to_string(p))] =
            stats_json(std::string(split::to_string(p)), qas, split::partition_ids(manifest, p), log);
    }
    write_file(cfg.out / "split_stats.json", dump(j));
}

void cmd_stats(const RunConfig& cfg, std::ostream& log) {
    const auto corpus = load_corpus(cfg, false);
    const auto filtered = split::filter_categories(corpus.qas, cfg.split.drop_categories);
    std::set<std::string> all_images;
    for (const auto& img : corpus.images) all_images.insert(img.image_id);
    json j{{"seed", cfg.seed}, {"all", stats_json("all", filtered, all_images, log)}};
    const bool have_split = !cfg.manifest.empty() || cfg.split.test_fraction ||
                            !cfg.split.test_patient_ids.empty() || !cfg.test_patients_file.empty();
    if (have_split) {
        const auto m = resolve_manifest(cfg, corpus);
        for (auto p : {split::Partition::train, split::Partition::test, split::Partition::extended_test}) {
            const auto qas = split::select_qas(m, filtered, p);
            j[std::string(split::to_string(p))] =
                stats_json(std::string(split::to_string(p)), qas, split::partition_ids(m, p), log);
        }
    }
    write_file(cfg.out / "stats.json", dump(j));
}

void cmd_eval(const RunConfig& cfg, std::ostream& log) {
    if (!cfg.oracle && !cfg.endpoint) throw ContractError("eval needs an oracle or an endpoint");
    if (cfg.oracle && cfg.endpoint) throw ContractError("eval takes an oracle or an endpoint, not both");
    if (cfg.runs == 0) throw ContractError("eval needs at least one run");

    const auto variant = enrich::parse_variant(cfg.eval_variant);
    const bool need_experts = variant == enrich::Variant::enhanced ||
                              (cfg.oracle && cfg.oracle->kind == client::OracleKind::expert_threshold);
    const auto corpus = load_corpus(cfg, need_experts);
    require_valid(validate(corpus.images, corpus.qas, corpus.experts));

    const auto filtered = split::filter_categories(corpus.qas, cfg.split.drop_categories);
    const auto qas = partition_qas(cfg, corpus, filtered, cfg.eval_partition);
    if (qas.empty()) throw ContractError("no QA pairs in partition " + cfg.eval_partition);

    // Prompts are the human turns of the instruction records, in record order.
    std::unordered_map<std::string, std::string> prompt_of;
    {
        const auto records = build_records(corpus, qas, variant, cfg);
        const auto grouped = group_by_image(qas);
        std::size_t r = 0;
        for (const auto& [image_id, group] : grouped.by_image) {
            for (std::size_t t = 0; t < group.size(); ++t)
                prompt_of[group[t].qa_id] = records[r].turns[2 * t].text;
            ++r;
        }
    }
    std::unordered_map<std::string, std::string> refs;
    for (const auto& img : corpus.images) refs.emplace(img.image_id, image_ref(img));
    std::vector<client::InferenceRequest> requests;
    requests.reserve(qas.size());
    for (const auto& qa : qas) requests.push_back({qa.qa_id, refs.at(qa.image_id), prompt_of.at(qa.qa_id)});

    std::unique_ptr<client::Transport> transport;
    client::OracleSpec oracle;
    if (cfg.oracle) {
        oracle = *cfg.oracle;
        if (oracle.kind == client::OracleKind::lookup) {
            auto in = open_input(cfg.lookup_file, "lookup answers");
            for (auto& r : client::read_responses(in)) oracle.lookup[r.qa_id] = std::move(r.answer);
        }
    } else if (cfg.endpoint->mode == "http") {
        client::HttpTransport::Options o;
        o.url = cfg.endpoint->url;
        if (const char* token = std::getenv(client::kTokenEnvVar)) o.bearer_token = token;
        o.read_timeout = std::chrono::seconds(cfg.endpoint->timeout_s);
        transport = std::make_unique<client::HttpTransport>(o);
    } else if (cfg.endpoint->mode == "file") {
        client::FileExchangeTransport::Options o;
        o.dir = cfg.endpoint->dir.empty() ? cfg.out / cfg.system / "exchange" : cfg.endpoint->dir;
        o.responder_command = cfg.endpoint->command;
        o.timeout = std::chrono::seconds(cfg.endpoint->timeout_s);
        transport = std::make_unique<client::FileExchangeTransport>(o);
    } else {
        throw ContractError("unknown endpoint mode: " + cfg.endpoint->mode);
    }

    const fs::path dir = cfg.out / cfg.system;
    fs::create_directories(dir);
    std::vector<stats::RunMeans> means;
    json runs_json = json::array();
    for (std::size_t k = 1; k <= cfg.runs; ++k) {
        const std::string run_id = cfg.system + "/run_" + std::to_string(k);
        std::vector<metrics::Prediction> preds;
        if (transport) {
            client::SubmitOptions so;
            so.run_id = run_id;
            so.shard_size = cfg.endpoint->shard_size;
            so.max_concurrency = cfg.endpoint->concurrency;
            so.retry.attempts = cfg.endpoint->retry_attempts;
            so.retry.initial_backoff = std::chrono::milliseconds(cfg.endpoint->backoff_ms);
            preds = client::submit_batch(requests, *transport, so);
        } else {
            preds = client::run_oracle(oracle, qas, corpus.experts, run_id);
        }
        const auto scores = metrics::score_run(preds, qas, cfg.score);

        std::ostringstream ps, ss;
        metrics::write_predictions(ps, preds);
        metrics::write_scores(ss, scores);
        const std::string stem = "run_" + std::to_string(k);
        write_file(dir / (stem + ".predictions.jsonl"), ps.str());
        write_file(dir / (stem + ".scores.jsonl"), ss.str());

        json buckets = json::object();
        for (const auto& [b, st] : metrics::aggregate(scores))
            buckets[metrics::bucket_label(b)] = {{"mean", st.mean()}, {"n", st.count}, {"excluded", st.excluded}};
        runs_json.push_back({{"run_id", run_id}, {"buckets", std::move(buckets)}});
        means.push_back(stats::run_means(scores));
    }

    const auto summary = stats::summarize_runs(means);
    json sum = json::object();
    for (const auto& [key, st] : summary) sum[key] = {{"mean", st.mean}, {"std", st.stddev}, {"runs", st.runs}};
    json agg{{"system", cfg.system},
             {"variant", cfg.eval_variant},
             {"partition", cfg.eval_partition},
             {"questions", qas.size()},
             {"seed", cfg.seed},
             {"config_fingerprint", config_fingerprint(cfg)},
             {"template_version", std::string(enrich::kTemplateVersion)},
             {"runs", std::move(runs_json)},
             {"summary", std::move(sum)}};
    write_file(dir / "aggregate.json", dump(agg));

    log << "system " << cfg.system << " (" << cfg.eval_variant << ", " << qas.size() << " questions, "
        << cfg.runs << " runs)\n";
    for (const auto& key : report::row_order(summary)) {
        const auto& st = summary.at(key);
        log << "  " << report::row_title(key) << "  " << report::render_cell(st.mean, st.stddev) << '\n';
    }
}

void cmd_compare(const RunConfig& cfg, std::ostream& log) {
    const auto a = load_runs(cfg.scores_a);
    const auto b = load_runs(cfg.scores_b);
    report::ReportMeta meta;
    meta.label_a = cfg.label_a;
    meta.label_b = cfg.label_b;
    meta.config_fingerprint = config_fingerprint(cfg);
    meta.template_version = std::string(enrich::kTemplateVersion);
    meta.seed = cfg.seed;
    meta.options = cfg.compare;
    const auto rep = report::build_report(a, b, meta);
    const auto table = report::render_table(rep);
    write_file(cfg.out / "report.json", dump(rep));
    write_file(cfg.out / "report.txt", table);
    log << table;
}

void cmd_auc(const RunConfig& cfg, std::ostream& log) {
    auto in = open_input(cfg.auc_input, "AUC score");
    const auto rows = report::auc_table(in);
    const auto text = report::render_auc(rows);
    write_file(cfg.out / "auc.json", dump(json{{"seed", cfg.seed}, {"conditions", report::to_json(rows)}}));
    write_file(cfg.out / "auc.txt", text);
    log << text;
}

}  // namespace cxrkit::commands
