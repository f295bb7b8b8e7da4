#include "cxrkit/metrics.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "cxrkit/text.hpp"

namespace cxrkit::metrics {

using nlohmann::json;

RecallMode parse_recall_mode(std::string_view s) {
    if (s == "multiset") return RecallMode::multiset;
    if (s == "set") return RecallMode::set;
    throw ContractError("unknown recall mode: " + std::string(s));
}

std::string_view to_string(RecallMode m) { return m == RecallMode::multiset ? "multiset" : "set"; }

std::string_view to_string(Metric m) { return m == Metric::token_recall ? "token_recall" : "accuracy"; }

namespace {

// Returns the byte length of an edge character to strip at pos (0 if none).
std::size_t strip_len_front(std::string_view t) {
    constexpr std::string_view ascii = ".,;:!?()[]\"'";
    if (t.empty()) return 0;
    if (ascii.find(t.front()) != std::string_view::npos) return 1;
    if (t.substr(0, 3) == "\xE2\x80\x99" || t.substr(0, 3) == "\xE2\x80\x98") return 3;  // ’ ‘
    return 0;
}

std::size_t strip_len_back(std::string_view t) {
    constexpr std::string_view ascii = ".,;:!?()[]\"'";
    if (t.empty()) return 0;
    if (ascii.find(t.back()) != std::string_view::npos) return 1;
    if (t.size() >= 3) {
        const auto tail = t.substr(t.size() - 3);
        if (tail == "\xE2\x80\x99" || tail == "\xE2\x80\x98") return 3;
    }
    return 0;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view input) {
    std::vector<std::string> out;
    for (auto& raw : text::split_whitespace(text::lower(input))) {
        std::string_view t = raw;
        while (std::size_t n = strip_len_front(t)) t.remove_prefix(n);
        while (std::size_t n = strip_len_back(t)) t.remove_suffix(n);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

double token_recall(std::string_view pred, std::string_view gt, RecallMode mode) {
    auto gt_tokens = tokenize(gt);
    if (gt_tokens.empty()) throw UndefinedMetricError("token recall undefined: empty ground truth");
    auto pred_tokens = tokenize(pred);

    if (mode == RecallMode::set) {
        std::set<std::string> g(gt_tokens.begin(), gt_tokens.end());
        std::set<std::string> p(pred_tokens.begin(), pred_tokens.end());
        std::size_t hit = 0;
        for (const auto& t : g) hit += p.contains(t);
        return static_cast<double>(hit) / static_cast<double>(g.size());
    }

    std::unordered_map<std::string, std::size_t> available;
    for (auto& t : pred_tokens) ++available[std::move(t)];
    std::size_t hit = 0;
    for (const auto& t : gt_tokens) {
        auto it = available.find(t);
        if (it != available.end() && it->second > 0) {
            --it->second;
            ++hit;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(gt_tokens.size());
}

Polarity extract_polarity(std::string_view s) {
    const auto tokens = tokenize(s);
    if (tokens.empty()) return Polarity::none;
    if (tokens.front() == "yes") return Polarity::yes;
    if (tokens.front() == "no") return Polarity::no;
    bool yes = false, no = false;
    for (const auto& t : tokens) {
        yes |= t == "yes";
        no |= t == "no";
    }
    if (yes != no) return yes ? Polarity::yes : Polarity::no;
    return Polarity::none;
}

int closed_accuracy(std::string_view pred, std::string_view gt) {
    const std::string g = normalize_answer(gt);
    Polarity truth;
    if (g == "yes")
        truth = Polarity::yes;
    else if (g == "no")
        truth = Polarity::no;
    else
        throw ContractError("closed question with non-binary ground truth: '" + std::string(gt) + "'");
    const Polarity p = extract_polarity(pred);
    return p != Polarity::none && p == truth ? 1 : 0;
}

std::vector<QuestionScore> score_run(std::span<const Prediction> preds,
                                     std::span<const QARecord> qas, const ScoreOptions& opts) {
    std::unordered_map<std::string, const Prediction*> by_id;
    std::set<std::string> duplicates, unknown, missing;
    std::unordered_map<std::string, const QARecord*> qa_by_id;
    for (const auto& qa : qas) qa_by_id.emplace(qa.qa_id, &qa);
    for (const auto& p : preds) {
        if (!qa_by_id.contains(p.qa_id)) unknown.insert(p.qa_id);
        if (!by_id.emplace(p.qa_id, &p).second) duplicates.insert(p.qa_id);
    }
    for (const auto& qa : qas)
        if (!by_id.contains(qa.qa_id)) missing.insert(qa.qa_id);

    if (!duplicates.empty() || !unknown.empty() || !missing.empty()) {
        std::string msg = "prediction set does not match QA set:";
        auto list = [&](const char* what, const std::set<std::string>& ids) {
            if (ids.empty()) return;
            msg += std::string(" ") + what + "=[";
            std::size_t k = 0;
            for (const auto& id : ids) {
                if (k++) msg += ",";
                msg += id;
            }
            msg += "]";
        };
        list("missing", missing);
        list("duplicate", duplicates);
        list("unknown", unknown);
        throw ContractError(msg);
    }

    std::vector<QuestionScore> out;
    out.reserve(qas.size());
    for (const auto& qa : qas) {
        const Prediction& p = *by_id.at(qa.qa_id);
        QuestionScore s{qa.qa_id, qa.category, qa.openness, Metric::token_recall, std::nullopt,
                        p.run_id};
        if (qa.openness == Openness::closed) {
            s.metric = Metric::accuracy;
            s.value = closed_accuracy(p.answer_text, qa.answer);
        } else {
            try {
                s.value = token_recall(p.answer_text, qa.answer, opts.recall_mode);
            } catch (const UndefinedMetricError&) {
                s.value.reset();
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string bucket_label(const Bucket& b) {
    return std::string(to_string(b.category)) + "/" + std::string(to_string(b.openness));
}

Aggregate aggregate(std::span<const QuestionScore> scores) {
    Aggregate agg;
    for (const auto& s : scores) {
        auto& st = agg[{s.category, s.openness}];
        if (s.value)
            st.add(*s.value);
        else
            ++st.excluded;
    }
    return agg;
}

void merge_into(Aggregate& into, const Aggregate& from) {
    for (const auto& [b, st] : from) into[b].merge(st);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw ContractError("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw ContractError("auc: labels must be 0 or 1");
        n_pos += static_cast<std::size_t>(l);
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc undefined: single-class input");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of (average) ranks of the positives; ranks are 1-based.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
    return u / (np * nn);
}

// ---------------------------------------------------------------------------
// JSON lines
// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
void for_each_json_line(std::istream& in, Fn fn) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view v = line;
        if (lineno == 1 && text::starts_with_bom(v)) v.remove_prefix(3);
        v = text::trim(v);
        if (v.empty()) continue;
        try {
            fn(json::parse(v));
        } catch (const json::exception& ex) {
            throw ParseError(std::string("malformed record: ") + ex.what(), lineno);
        } catch (const ParseError& ex) {
            throw ParseError(ex.what(), lineno);
        }
    }
}

}  // namespace

void write_predictions(std::ostream& out, std::span<const Prediction> preds) {
    for (const auto& p : preds)
        out << json{{"qa_id", p.qa_id}, {"answer_text", p.answer_text}, {"run_id", p.run_id}}.dump()
            << '\n';
}

std::vector<Prediction> read_predictions(std::istream& in) {
    std::vector<Prediction> out;
    for_each_json_line(in, [&](const json& j) {
        out.push_back({j.at("qa_id").get<std::string>(), j.at("answer_text").get<std::string>(),
                       j.value("run_id", std::string{})});
    });
    return out;
}

void write_scores(std::ostream& out, std::span<const QuestionScore> scores) {
    for (const auto& s : scores) {
        json j{{"qa_id", s.qa_id},
               {"category", std::string(to_string(s.category))},
               {"openness", std::string(to_string(s.openness))},
               {"metric", std::string(to_string(s.metric))},
               {"value", s.value ? json(*s.value) : json(nullptr)},
               {"run_id", s.run_id}};
        out << j.dump() << '\n';
    }
}

std::vector<QuestionScore> read_scores(std::istream& in) {
    std::vector<QuestionScore> out;
    for_each_json_line(in, [&](const json& j) {
        QuestionScore s;
        s.qa_id = j.at("qa_id").get<std::string>();
        const auto cat = parse_category(j.at("category").get<std::string>());
        const auto open = parse_openness(j.at("openness").get<std::string>());
        if (!cat || !open) throw ParseError("bad category/openness in score record");
        s.category = *cat;
        s.openness = *open;
        const auto metric = j.at("metric").get<std::string>();
        if (metric == "token_recall")
            s.metric = Metric::token_recall;
        else if (metric == "accuracy")
            s.metric = Metric::accuracy;
        else
            throw ParseError("bad metric in score record: " + metric);
        if (!j.at("value").is_null()) s.value = j.at("value").get<double>();
        s.run_id = j.value("run_id", std::string{});
        out.push_back(std::move(s));
    });
    return out;
}

}  // namespace cxrkit::metrics
