#include "cxrkit/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>

#include "cxrkit/error.hpp"
#include "cxrkit/ingest.hpp"
#include "cxrkit/text.hpp"

namespace cxrkit::report {

using nlohmann::json;

namespace {

template <class Map>
std::vector<std::string> ordered_keys(const Map& m) {
    std::vector<std::string> keys;
    for (QACategory c : kAllCategories)
        for (Openness o : {Openness::open, Openness::closed}) {
            const std::string k = metrics::bucket_label({c, o});
            if (m.contains(k)) keys.push_back(k);
        }
    for (const char* k : {"average/open", "average/closed"})
        if (m.contains(k)) keys.emplace_back(k);
    return keys;
}

}  // namespace

std::vector<std::string> row_order(const stats::ComparisonResult& cmp) { return ordered_keys(cmp); }
std::vector<std::string> row_order(const stats::RunSummary& summary) { return ordered_keys(summary); }

std::string row_title(const std::string& key) {
    const auto slash = key.find('/');
    std::string name = key.substr(0, slash);
    if (!name.empty()) name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    const std::string tag = key.substr(slash + 1) == "open" ? "(O)" : "(C)";
    return name + " " + tag;
}

std::string render_cell(double mean, double stddev, const std::string& star) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f (%.1f)", 100.0 * mean, 100.0 * stddev);
    return buf + star;
}

std::string render_row(const std::string& title, const std::string& cell_a,
                       const std::string& cell_b, const std::string& winner) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-18s %-16s %-16s %s", title.c_str(), cell_a.c_str(),
                  cell_b.c_str(), winner.c_str());
    std::string line = buf;
    while (!line.empty() && line.back() == ' ') line.pop_back();
    return line;
}

namespace {

json run_stat_json(const stats::RunStat& s) {
    return json{{"mean", s.mean}, {"std", s.stddev}, {"runs", s.runs}};
}

json wilcoxon_json(const stats::WilcoxonResult& w) {
    return json{{"w_statistic", w.w_statistic},
                {"w_plus", w.w_plus},
                {"w_minus", w.w_minus},
                {"n", w.n},
                {"n_effective", w.n_effective},
                {"p_value", w.p_value},
                {"z", w.z},
                {"method", std::string(stats::to_string(w.method))},
                {"alternative", std::string(stats::to_string(w.alternative))},
                {"degenerate", w.degenerate},
                {"zero_method", w.zero_method}};
}

std::size_t count_excluded(const stats::Runs& runs) {
    std::size_t n = 0;
    for (const auto& run : runs)
        for (const auto& s : run) n += !s.value.has_value();
    return n;
}

stats::CompareOptions options_from_meta(const json& meta) {
    stats::CompareOptions o;
    o.pooling = stats::parse_pooling(meta.at("pooling").get<std::string>());
    o.wilcoxon.alternative = stats::parse_alternative(meta.at("alternative").get<std::string>());
    o.wilcoxon.exact_max_n = meta.at("exact_max_n").get<std::size_t>();
    o.wilcoxon.continuity_correction = meta.at("continuity_correction").get<bool>();
    o.stars.one = meta.at("star_thresholds").at(0).get<double>();
    o.stars.two = meta.at("star_thresholds").at(1).get<double>();
    return o;
}

}  // namespace

json build_report(const stats::Runs& a, const stats::Runs& b, const ReportMeta& meta) {
    const auto cmp = stats::compare_systems(a, b, meta.options);

    json rows = json::array();
    for (const auto& key : row_order(cmp)) {
        const auto& r = cmp.at(key);
        const std::string winner = r.winner == 0 ? "a" : (r.winner == 1 ? "b" : "tie");
        const std::string& star_a = r.winner == 0 ? r.star : std::string{};
        const std::string& star_b = r.winner == 0 ? std::string{} : r.star;
        rows.push_back(json{
            {"key", key},
            {"title", row_title(key)},
            {"a", run_stat_json(r.a)},
            {"b", run_stat_json(r.b)},
            {"wilcoxon", wilcoxon_json(r.test)},
            {"star", r.star},
            {"winner", winner},
            {"n_pairs", r.n_pairs},
            {"excluded_pairs", r.excluded},
            {"cells", {{"a", render_cell(r.a.mean, r.a.stddev, star_a)},
                       {"b", render_cell(r.b.mean, r.b.stddev, star_b)}}},
        });
    }

    json metadata{
        {"label_a", meta.label_a},
        {"label_b", meta.label_b},
        {"config_fingerprint", meta.config_fingerprint},
        {"template_version", meta.template_version},
        {"tokenizer_version", std::string(metrics::kTokenizerVersion)},
        {"seed", meta.seed},
        {"runs_a", a.size()},
        {"runs_b", b.size()},
        {"pooling", std::string(stats::to_string(meta.options.pooling))},
        {"alternative", std::string(stats::to_string(meta.options.wilcoxon.alternative))},
        {"exact_max_n", meta.options.wilcoxon.exact_max_n},
        {"continuity_correction", meta.options.wilcoxon.continuity_correction},
        {"star_thresholds", {meta.options.stars.one, meta.options.stars.two}},
    };
    return json{{"metadata", std::move(metadata)},
                {"excluded_questions", {{"a", count_excluded(a)}, {"b", count_excluded(b)}}},
                {"rows", std::move(rows)}};
}

std::string render_table(const json& report) {
    const auto& meta = report.at("metadata");
    std::ostringstream os;
    os << render_row("Metrics (%)", meta.at("label_a").get<std::string>(),
                     meta.at("label_b").get<std::string>(), "Winner")
       << '\n';
    for (const auto& row : report.at("rows")) {
        const auto w = row.at("winner").get<std::string>();
        const std::string winner = w == "a" ? meta.at("label_a").get<std::string>()
                                   : w == "b" ? meta.at("label_b").get<std::string>()
                                              : "-";
        os << render_row(row.at("title").get<std::string>(), row.at("cells").at("a").get<std::string>(),
                         row.at("cells").at("b").get<std::string>(), winner)
           << '\n';
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "Token recall (%%) for open (O), accuracy (%%) for closed (C); mean (std) over "
                  "runs. * p < %g, ** p < %g (Wilcoxon signed-rank).\n",
                  meta.at("star_thresholds").at(0).get<double>(),
                  meta.at("star_thresholds").at(1).get<double>());
    os << buf;
    return os.str();
}

std::vector<std::string> audit_report(const json& report, const stats::Runs& a,
                                      const stats::Runs& b, double tol) {
    std::vector<std::string> issues;
    ReportMeta meta;
    const auto& m = report.at("metadata");
    meta.label_a = m.at("label_a").get<std::string>();
    meta.label_b = m.at("label_b").get<std::string>();
    meta.options = options_from_meta(m);
    const json fresh = build_report(a, b, meta);

    std::map<std::string, const json*> recomputed;
    for (const auto& row : fresh.at("rows")) recomputed[row.at("key").get<std::string>()] = &row;
    if (report.at("rows").size() != fresh.at("rows").size())
        issues.push_back("row count " + std::to_string(report.at("rows").size()) +
                         " != recomputed " + std::to_string(fresh.at("rows").size()));

    auto close = [&](double x, double y) { return std::fabs(x - y) <= tol; };
    for (const auto& row : report.at("rows")) {
        const auto key = row.at("key").get<std::string>();
        const auto it = recomputed.find(key);
        if (it == recomputed.end()) {
            issues.push_back(key + ": not recomputable from scores");
            continue;
        }
        const json& f = *it->second;
        for (const char* side : {"a", "b"})
            for (const char* field : {"mean", "std"})
                if (!close(row.at(side).at(field).get<double>(), f.at(side).at(field).get<double>()))
                    issues.push_back(key + ": " + side + "." + field + " differs");
        const double p = row.at("wilcoxon").at("p_value").get<double>();
        if (!close(p, f.at("wilcoxon").at("p_value").get<double>()))
            issues.push_back(key + ": p_value differs");
        const bool degenerate = row.at("wilcoxon").at("degenerate").get<bool>();
        const std::string expect_star = degenerate ? "" : stats::star_for(p, meta.options.stars);
        if (row.at("star").get<std::string>() != expect_star)
            issues.push_back(key + ": star inconsistent with p-value");
        if (row.at("star") != f.at("star")) issues.push_back(key + ": star differs");
        if (row.at("cells") != f.at("cells")) issues.push_back(key + ": rendered cells differ");
        if (row.at("winner") != f.at("winner")) issues.push_back(key + ": winner differs");
    }
    return issues;
}

// ---------------------------------------------------------------------------
// AUC
// ---------------------------------------------------------------------------

std::string display_name(const std::string& condition) {
    std::string out = condition_phrase(condition);
    bool start = true;
    for (char& c : out) {
        if (start && c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
        start = c == ' ';
    }
    return out;
}

std::vector<AucRow> auc_table(std::istream& csv) {
    ingest::DelimitedReader reader(csv, ',');
    std::vector<std::string> header;
    if (!reader.next(header)) throw ParseError("auc input: missing header row", 1);

    struct Columns {
        std::string condition;
        std::size_t score = 0, label = 0;
        std::vector<double> scores;
        std::vector<int> labels;
    };
    std::vector<Columns> cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string h(text::trim(header[i]));
        constexpr std::string_view suffix = "_score";
        if (h.size() <= suffix.size() || h.compare(h.size() - suffix.size(), suffix.size(), suffix) != 0)
            continue;
        const std::string name = h.substr(0, h.size() - suffix.size());
        const auto label = std::find_if(header.begin(), header.end(), [&](const std::string& x) {
            return text::trim(x) == name + "_label";
        });
        if (label == header.end()) throw ParseError("auc input: no label column for " + name, 1);
        cols.push_back({name, i, static_cast<std::size_t>(label - header.begin()), {}, {}});
    }
    if (cols.empty()) throw ParseError("auc input: no <condition>_score columns", 1);

    std::vector<std::string> row;
    while (reader.next(row)) {
        if (row.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " fields", reader.line());
        for (auto& c : cols) {
            const auto s = text::trim(row[c.score]);
            const auto l = text::trim(row[c.label]);
            if (s.empty()) continue;
            int label;
            if (l == "1" || l == "1.0")
                label = 1;
            else if (l == "0" || l == "0.0")
                label = 0;
            else
                continue;
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size())
                throw ParseError("non-numeric score for " + c.condition + ": " + std::string(s),
                                 reader.line());
            c.scores.push_back(v);
            c.labels.push_back(label);
        }
    }

    std::vector<AucRow> out;
    for (const auto& c : cols) {
        AucRow r{c.condition, std::nullopt, 0, 0};
        for (int l : c.labels) (l ? r.positives : r.negatives)++;
        if (r.positives && r.negatives) r.auc = metrics::auc(c.scores, c.labels);
        out.push_back(std::move(r));
    }
    return out;
}

std::string render_auc(const std::vector<AucRow>& rows) {
    std::string head, vals;
    for (const auto& r : rows) {
        const std::string name = display_name(r.condition);
        char v[32];
        if (r.auc)
            std::snprintf(v, sizeof v, "%.2f", *r.auc);
        else
            std::snprintf(v, sizeof v, "n/a");
        const std::size_t w = std::max(name.size(), std::string(v).size()) + 2;
        head += name + std::string(w - name.size(), ' ');
        vals += std::string(v) + std::string(w - std::string(v).size(), ' ');
    }
    while (!head.empty() && head.back() == ' ') head.pop_back();
    while (!vals.empty() && vals.back() == ' ') vals.pop_back();
    return head + "\n" + vals + "\n";
}

json to_json(const std::vector<AucRow>& rows) {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back(json{{"condition", r.condition},
                           {"auc", r.auc ? json(*r.auc) : json(nullptr)},
                           {"positives", r.positives},
                           {"negatives", r.negatives}});
    return out;
}

}  // namespace cxrkit::report
