#include "cxrkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cxrkit/error.hpp"
#include "cxrkit/text.hpp"

namespace cxrkit {

std::string_view to_string(QACategory c) {
    switch (c) {
        case QACategory::abnormality: return "abnormality";
        case QACategory::presence: return "presence";
        case QACategory::view: return "view";
        case QACategory::location: return "location";
        case QACategory::level: return "level";
        case QACategory::type: return "type";
        case QACategory::difference: return "difference";
    }
    return "?";
}

std::optional<QACategory> parse_category(std::string_view s) {
    const std::string key = text::lower(text::trim(s));
    for (QACategory c : kAllCategories)
        if (key == to_string(c)) return c;
    return std::nullopt;
}

std::string_view to_string(Openness o) { return o == Openness::open ? "open" : "closed"; }

std::optional<Openness> parse_openness(std::string_view s) {
    const std::string key = text::lower(text::trim(s));
    if (key == "open") return Openness::open;
    if (key == "closed") return Openness::closed;
    return std::nullopt;
}

std::string_view to_string(Race r) {
    switch (r) {
        case Race::asian: return "Asian";
        case Race::black: return "Black";
        case Race::white: return "White";
    }
    return "?";
}

std::optional<Race> parse_race(std::string_view s) {
    for (Race r : {Race::asian, Race::black, Race::white})
        if (s == to_string(r)) return r;
    return std::nullopt;
}

std::string_view to_string(ViewPosition v) {
    return v == ViewPosition::frontal ? "Frontal" : "Lateral";
}

std::optional<ViewPosition> parse_view(std::string_view s) {
    if (s == "Frontal") return ViewPosition::frontal;
    if (s == "Lateral") return ViewPosition::lateral;
    return std::nullopt;
}

std::optional<std::size_t> condition_index(std::string_view key) {
    for (std::size_t i = 0; i < kConditions.size(); ++i)
        if (kConditions[i] == key) return i;
    return std::nullopt;
}

std::string condition_phrase(std::string_view key) {
    std::string out(key);
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

double ExpertPrediction::prob(std::string_view condition) const {
    const auto idx = condition_index(condition);
    if (!idx) throw ContractError("unknown condition: " + std::string(condition));
    return disease_probs[*idx];
}

std::string normalize_answer(std::string_view answer) {
    std::string s = text::lower(text::trim(answer));
    while (!s.empty()) {
        const char c = s.back();
        if (c == '.' || c == ',' || c == '!' || c == '?' || c == ' ' || c == '\t' || c == '\r' ||
            c == '\n')
            s.pop_back();
        else
            break;
    }
    return s;
}

Openness classify_openness(std::string_view answer) {
    if (text::trim(answer).empty()) throw ValidationError("invalid record: empty answer");
    const std::string n = normalize_answer(answer);
    return (n == "yes" || n == "no") ? Openness::closed : Openness::open;
}

namespace {

template <typename Range, typename KeyFn>
void collect_duplicates(const Range& records, std::string_view kind, KeyFn key,
                        std::vector<DuplicateId>& out) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[key(r)];
    for (const auto& [id, n] : counts)
        if (n > 1) out.push_back({std::string(kind), id, n});
}

void check_qa(const QARecord& qa, std::vector<InvalidRecord>& out) {
    auto bad = [&](std::string reason) { out.push_back({"qa", qa.qa_id, std::move(reason)}); };
    if (qa.qa_id.empty()) bad("empty qa_id");
    if (text::trim(qa.question).empty()) bad("empty question");
    if (text::trim(qa.answer).empty()) {
        bad("empty answer");
        return;
    }
    if (classify_openness(qa.answer) != qa.openness) bad("openness inconsistent with answer");
}

void check_image(const ImageRecord& img, std::vector<InvalidRecord>& out) {
    if (img.image_id.empty()) out.push_back({"image", img.image_id, "empty image_id"});
    if (img.patient_id.empty()) out.push_back({"image", img.image_id, "empty patient_id"});
    if (img.study_id.empty()) out.push_back({"image", img.image_id, "empty study_id"});
}

void check_expert(const ExpertPrediction& e, std::vector<InvalidRecord>& out) {
    for (std::size_t i = 0; i < kNumConditions; ++i) {
        const double p = e.disease_probs[i];
        if (!(p >= 0.0 && p <= 1.0))
            out.push_back({"expert", e.image_id,
                           "probability out of range: " + std::string(kConditions[i])});
    }
    if (!(e.age_years >= 0.0) || !std::isfinite(e.age_years))
        out.push_back({"expert", e.image_id, "age out of range"});
}

}  // namespace

CorpusReport validate(std::span<const ImageRecord> images, std::span<const QARecord> qas,
                      std::span<const ExpertPrediction> experts) {
    CorpusReport rep;
    rep.image_count = images.size();
    rep.qa_count = qas.size();
    rep.expert_count = experts.size();

    std::unordered_set<std::string> known;
    known.reserve(images.size());
    for (const auto& img : images) {
        known.insert(img.image_id);
        check_image(img, rep.invalid);
    }
    for (const auto& qa : qas) {
        if (!known.contains(qa.image_id)) rep.dangling.push_back({"qa", qa.qa_id, qa.image_id});
        check_qa(qa, rep.invalid);
    }
    for (const auto& e : experts) {
        if (!known.contains(e.image_id)) rep.dangling.push_back({"expert", e.image_id, e.image_id});
        check_expert(e, rep.invalid);
    }

    collect_duplicates(images, "image", [](const ImageRecord& r) { return r.image_id; },
                       rep.duplicates);
    collect_duplicates(qas, "qa", [](const QARecord& r) { return r.qa_id; }, rep.duplicates);
    collect_duplicates(experts, "expert", [](const ExpertPrediction& r) { return r.image_id; },
                       rep.duplicates);

    std::sort(rep.dangling.begin(), rep.dangling.end());
    std::sort(rep.duplicates.begin(), rep.duplicates.end());
    std::sort(rep.invalid.begin(), rep.invalid.end());
    return rep;
}

std::string CorpusReport::summary() const {
    std::ostringstream os;
    os << "images=" << image_count << " qas=" << qa_count << " experts=" << expert_count
       << " dangling=" << dangling.size() << " duplicates=" << duplicates.size()
       << " invalid=" << invalid.size();
    constexpr std::size_t kShow = 5;
    for (std::size_t i = 0; i < std::min(kShow, dangling.size()); ++i)
        os << "\n  dangling " << dangling[i].kind << " " << dangling[i].record_id << " -> "
           << dangling[i].image_id;
    for (std::size_t i = 0; i < std::min(kShow, duplicates.size()); ++i)
        os << "\n  duplicate " << duplicates[i].kind << " " << duplicates[i].id << " x"
           << duplicates[i].occurrences;
    for (std::size_t i = 0; i < std::min(kShow, invalid.size()); ++i)
        os << "\n  invalid " << invalid[i].kind << " " << invalid[i].id << ": "
           << invalid[i].reason;
    return os.str();
}

void require_valid(const CorpusReport& report) {
    if (!report.valid()) throw ValidationError("corpus validation failed: " + report.summary());
}

}  // namespace cxrkit
