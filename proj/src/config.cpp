#include "cxrkit/config.hpp"

#include <fstream>
#include <sstream>

#include "cxrkit/error.hpp"
#include "cxrkit/text.hpp"

namespace cxrkit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const json& j, const char* key, const fs::path& base) {
    if (!j.contains(key) || j.at(key).is_null()) return {};
    fs::path p = j.at(key).get<std::string>();
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

ingest::TableSchema schema_from_json(const json& j) {
    ingest::TableSchema s;
    const auto delim = j.value("delimiter", std::string(","));
    if (delim == "\\t" || delim == "tab")
        s.delimiter = '\t';
    else if (delim.size() == 1)
        s.delimiter = delim[0];
    else
        throw ContractError("delimiter must be a single character: " + delim);
    s.has_header = j.value("header", true);
    if (j.contains("columns"))
        s.columns = j.at("columns").get<std::map<std::string, std::string>>();
    return s;
}

json schema_to_json(const ingest::TableSchema& s) {
    return json{{"delimiter", std::string(1, s.delimiter)},
                {"header", s.has_header},
                {"columns", s.columns}};
}

client::OracleSpec oracle_from_json(const json& j) {
    client::OracleSpec o;
    o.kind = client::parse_oracle_kind(j.value("kind", std::string("echo_gt")));
    o.constant_text = j.value("constant", std::string{});
    o.threshold = j.value("threshold", 0.5);
    if (j.contains("synonyms"))
        for (const auto& [k, v] : j.at("synonyms").items()) o.synonyms[k] = v.get<std::string>();
    o.generic_abnormality = j.value("generic_abnormality", true);
    return o;
}

json oracle_to_json(const client::OracleSpec& o) {
    return json{{"kind", std::string(client::to_string(o.kind))},
                {"constant", o.constant_text},
                {"threshold", o.threshold},
                {"synonyms", o.synonyms},
                {"generic_abnormality", o.generic_abnormality}};
}

}  // namespace

RunConfig config_from_json(const json& j, const fs::path& base) {
    try {
        RunConfig c;
        const json empty = json::object();
        const auto& in = j.contains("inputs") ? j.at("inputs") : empty;
        c.images = resolve(in, "images", base);
        c.qas = resolve(in, "qas", base);
        c.experts = resolve(in, "experts", base);
        c.manifest = resolve(in, "manifest", base);

        if (j.contains("schema")) {
            const auto& s = j.at("schema");
            if (s.contains("images")) c.schema.images = schema_from_json(s.at("images"));
            if (s.contains("qas")) c.schema.qas = schema_from_json(s.at("qas"));
        }

        if (j.contains("enrich")) {
            const auto& e = j.at("enrich");
            c.threshold = e.value("threshold", c.threshold);
            c.build_options.image_token = e.value("image_token", c.build_options.image_token);
            if (e.contains("placement"))
                c.build_options.placement = enrich::parse_placement(e.at("placement").get<std::string>());
        }

        c.seed = j.value("seed", std::uint64_t{0});
        c.split.seed = c.seed;
        if (j.contains("split")) {
            const auto& s = j.at("split");
            if (s.contains("test_patient_ids"))
                c.split.test_patient_ids = s.at("test_patient_ids").get<std::set<std::string>>();
            c.test_patients_file = resolve(s, "test_patients_file", base);
            if (s.contains("test_fraction") && !s.at("test_fraction").is_null())
                c.split.test_fraction = s.at("test_fraction").get<double>();
            if (s.contains("drop_categories")) {
                c.split.drop_categories.clear();
                for (const auto& v : s.at("drop_categories")) {
                    const auto cat = parse_category(v.get<std::string>());
                    if (!cat) throw ContractError("unknown category: " + v.get<std::string>());
                    c.split.drop_categories.insert(*cat);
                }
            }
        }

        if (j.contains("build")) {
            const auto& b = j.at("build");
            c.build_variant = b.value("variant", c.build_variant);
            c.build_partition = b.value("partition", c.build_partition);
        }

        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            c.system = e.value("system", c.system);
            c.eval_variant = e.value("variant", c.eval_variant);
            c.eval_partition = e.value("partition", c.eval_partition);
            c.runs = e.value("runs", c.runs);
            if (e.contains("oracle")) {
                c.oracle = oracle_from_json(e.at("oracle"));
                c.lookup_file = resolve(e.at("oracle"), "lookup_file", base);
            }
            if (e.contains("endpoint")) {
                const auto& ep = e.at("endpoint");
                EndpointConfig ec;
                ec.mode = ep.value("mode", ec.mode);
                ec.url = ep.value("url", ec.url);
                ec.dir = resolve(ep, "dir", base);
                ec.command = ep.value("command", ec.command);
                ec.shard_size = ep.value("shard_size", ec.shard_size);
                ec.concurrency = ep.value("concurrency", ec.concurrency);
                ec.retry_attempts = ep.value("retry_attempts", ec.retry_attempts);
                ec.backoff_ms = ep.value("backoff_ms", ec.backoff_ms);
                ec.timeout_s = ep.value("timeout_s", ec.timeout_s);
                c.endpoint = ec;
            }
        }

        if (j.contains("metrics"))
            c.score.recall_mode =
                metrics::parse_recall_mode(j.at("metrics").value("recall_mode", std::string("multiset")));

        if (j.contains("compare")) {
            const auto& m = j.at("compare");
            c.scores_a = resolve(m, "a", base);
            c.scores_b = resolve(m, "b", base);
            c.label_a = m.value("label_a", c.label_a);
            c.label_b = m.value("label_b", c.label_b);
            c.compare.pooling = stats::parse_pooling(m.value("pooling", std::string("paired_runs")));
            c.compare.wilcoxon.alternative =
                stats::parse_alternative(m.value("alternative", std::string("two_sided")));
            c.compare.wilcoxon.exact_max_n = m.value("exact_max_n", c.compare.wilcoxon.exact_max_n);
            c.compare.stars.one = m.value("star_one", c.compare.stars.one);
            c.compare.stars.two = m.value("star_two", c.compare.stars.two);
        }

        if (j.contains("auc")) c.auc_input = resolve(j.at("auc"), "input", base);

        if (j.contains("out")) c.out = resolve(j, "out", base);
        return c;
    } catch (const json::exception& ex) {
        throw ParseError(std::string("malformed config: ") + ex.what());
    }
}

RunConfig load_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open config file " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& ex) {
        throw ParseError("malformed config " + file.string() + ": " + ex.what());
    }
    return config_from_json(j, file.parent_path());
}

json config_to_json(const RunConfig& c) {
    json drop = json::array();
    for (QACategory cat : c.split.drop_categories) drop.push_back(std::string(to_string(cat)));
    json j{
        {"schema", {{"images", schema_to_json(c.schema.images)}, {"qas", schema_to_json(c.schema.qas)}}},
        {"enrich",
         {{"threshold", c.threshold},
          {"image_token", c.build_options.image_token},
          {"placement", std::string(enrich::to_string(c.build_options.placement))},
          {"template_version", std::string(enrich::kTemplateVersion)}}},
        {"split",
         {{"test_patient_ids", c.split.test_patient_ids},
          {"test_fraction", c.split.test_fraction ? json(*c.split.test_fraction) : json(nullptr)},
          {"drop_categories", std::move(drop)},
          {"selection_rule", c.split.selection_rule}}},
        {"build", {{"variant", c.build_variant}, {"partition", c.build_partition}}},
        {"eval",
         {{"system", c.system},
          {"variant", c.eval_variant},
          {"partition", c.eval_partition},
          {"runs", c.runs},
          {"oracle", c.oracle ? oracle_to_json(*c.oracle) : json(nullptr)},
          {"endpoint", c.endpoint ? json{{"mode", c.endpoint->mode}, {"url", c.endpoint->url}}
                                  : json(nullptr)}}},
        {"metrics",
         {{"recall_mode", std::string(metrics::to_string(c.score.recall_mode))},
          {"tokenizer_version", std::string(metrics::kTokenizerVersion)}}},
        {"compare",
         {{"pooling", std::string(stats::to_string(c.compare.pooling))},
          {"alternative", std::string(stats::to_string(c.compare.wilcoxon.alternative))},
          {"exact_max_n", c.compare.wilcoxon.exact_max_n},
          {"star_one", c.compare.stars.one},
          {"star_two", c.compare.stars.two},
          {"label_a", c.label_a},
          {"label_b", c.label_b}}},
        {"seed", c.seed},
    };
    return j;
}

std::string config_fingerprint(const RunConfig& c) {
    text::Fnv1a h;
    h.add_field(config_to_json(c).dump());
    for (const fs::path& p : {c.images, c.qas, c.experts, c.test_patients_file, c.lookup_file}) {
        if (p.empty()) {
            h.add_field("-");
            continue;
        }
        std::ifstream in(p, std::ios::binary);
        if (!in) {
            h.add_field("missing");
            continue;
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        h.add_field(ss.str());
    }
    return h.hex();
}

client::OracleSpec parse_oracle_flag(const std::string& flag) {
    client::OracleSpec o;
    const auto colon = flag.find(':');
    o.kind = client::parse_oracle_kind(flag.substr(0, colon));
    if (o.kind == client::OracleKind::constant) {
        if (colon == std::string::npos) throw ContractError("constant oracle needs text: constant:<text>");
        o.constant_text = flag.substr(colon + 1);
    } else if (colon != std::string::npos) {
        throw ContractError("unexpected oracle parameter in " + flag);
    }
    return o;
}

EndpointConfig parse_endpoint_flag(const std::string& flag) {
    EndpointConfig e;
    if (flag.rfind("http://", 0) == 0 || flag.rfind("https://", 0) == 0) {
        e.mode = "http";
        e.url = flag;
        return e;
    }
    if (flag.rfind("file:", 0) == 0) {
        e.mode = "file";
        const std::string rest = flag.substr(5);
        const auto colon = rest.find(':');
        e.dir = rest.substr(0, colon);
        if (colon != std::string::npos) e.command = rest.substr(colon + 1);
        return e;
    }
    throw ContractError("endpoint must be http(s)://... or file:<dir>[:<command>]: " + flag);
}

}  // namespace cxrkit
