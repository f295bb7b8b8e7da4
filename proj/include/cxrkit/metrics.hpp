#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxrkit/corpus.hpp"
#include "cxrkit/error.hpp"

namespace cxrkit::metrics {

inline constexpr std::string_view kTokenizerVersion = "tok-v1";

// Raised for questions whose metric is undefined (empty ground-truth tokens, single-class AUC).
class UndefinedMetricError : public ContractError {
public:
    using ContractError::ContractError;
};

enum class RecallMode { multiset, set };
RecallMode parse_recall_mode(std::string_view s);
std::string_view to_string(RecallMode m);

// Lowercase, whitespace split, strip .,;:!?()[]" and apostrophes from token edges.
std::vector<std::string> tokenize(std::string_view text);

// |tokens(pred) ∩ tokens(gt)| / |tokens(gt)|, each token credited at most its gt multiplicity.
double token_recall(std::string_view pred, std::string_view gt,
                    RecallMode mode = RecallMode::multiset);

enum class Polarity { yes, no, none };

// First token if it is yes/no; else the only one of yes/no present anywhere; else none.
Polarity extract_polarity(std::string_view text);

// 1 iff the prediction's polarity equals the ground truth's. gt must normalize to yes/no.
int closed_accuracy(std::string_view pred, std::string_view gt);

struct Prediction {
    std::string qa_id;
    std::string answer_text;
    std::string run_id;
    bool operator==(const Prediction&) const = default;
};

enum class Metric { token_recall, accuracy };
std::string_view to_string(Metric m);

struct QuestionScore {
    std::string qa_id;
    QACategory category = QACategory::abnormality;
    Openness openness = Openness::open;
    Metric metric = Metric::token_recall;
    std::optional<double> value;  // empty when the metric is undefined for this question
    std::string run_id;
    bool operator==(const QuestionScore&) const = default;
};

struct ScoreOptions {
    RecallMode recall_mode = RecallMode::multiset;
};

// One score per QA, in QA order. Throws ContractError listing missing/duplicate/unknown ids.
std::vector<QuestionScore> score_run(std::span<const Prediction> preds,
                                     std::span<const QARecord> qas, const ScoreOptions& opts = {});

struct Bucket {
    QACategory category = QACategory::abnormality;
    Openness openness = Openness::open;
    auto operator<=>(const Bucket&) const = default;
};

std::string bucket_label(const Bucket& b);  // e.g. "abnormality/open"

struct BucketStat {
    double sum = 0.0;
    std::size_t count = 0;     // scored questions
    std::size_t excluded = 0;  // undefined-metric questions

    double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
    void add(double v) { sum += v; ++count; }
    void merge(const BucketStat& o) { sum += o.sum; count += o.count; excluded += o.excluded; }
};

using Aggregate = std::map<Bucket, BucketStat>;

// Per-bucket means in input order; buckets with no questions are absent.
Aggregate aggregate(std::span<const QuestionScore> scores);
void merge_into(Aggregate& into, const Aggregate& from);

// Rank-based AUC with average ranks for ties. Labels are 0/1.
double auc(std::span<const double> scores, std::span<const int> labels);

// JSON-lines codecs for predictions and per-question scores.
void write_predictions(std::ostream& out, std::span<const Prediction> preds);
std::vector<Prediction> read_predictions(std::istream& in);
void write_scores(std::ostream& out, std::span<const QuestionScore> scores);
std::vector<QuestionScore> read_scores(std::istream& in);

}  // namespace cxrkit::metrics
