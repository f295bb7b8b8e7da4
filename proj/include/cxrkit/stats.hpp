#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxrkit/metrics.hpp"

namespace cxrkit::stats {

enum class Alternative { two_sided, greater, less };  // greater: b tends to exceed a
Alternative parse_alternative(std::string_view s);
std::string_view to_string(Alternative a);

enum class Method { exact, normal_approx };
std::string_view to_string(Method m);

struct WilcoxonOptions {
    Alternative alternative = Alternative::two_sided;
    std::size_t exact_max_n = 25;  // exact null distribution up to this many non-zero differences
    bool continuity_correction = true;
};

struct WilcoxonResult {
    double w_statistic = 0.0;  // min(W+, W-)
    double w_plus = 0.0;
    double w_minus = 0.0;
    std::size_t n = 0;
    std::size_t n_effective = 0;  // after dropping zero differences
    double p_value = 1.0;
    double z = 0.0;  // normal approximation only
    Method method = Method::exact;
    Alternative alternative = Alternative::two_sided;
    bool degenerate = false;  // every difference was zero
    std::string zero_method = "wilcox";
};

struct PairedSample {
    std::vector<std::string> qa_ids;
    std::vector<double> a_values;
    std::vector<double> b_values;
};

// Signed-rank test on differences d (= b - a). Zeros dropped, |d| ranked with average ranks.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences,
                                    const WilcoxonOptions& opts = {});
WilcoxonResult wilcoxon_signed_rank(const PairedSample& sample, const WilcoxonOptions& opts = {});

// Mean and population standard deviation of per-run values.
struct RunStat {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> runs;
};

using RunMeans = std::map<std::string, double>;       // row key -> mean for one inference
using RunSummary = std::map<std::string, RunStat>;    // row key -> across-run summary

RunSummary summarize_runs(std::span<const RunMeans> runs);

struct StarThresholds {
    double one = 0.05;
    double two = 0.001;
};

std::string star_for(double p, const StarThresholds& t = {});

enum class Pooling { paired_runs, mean_over_runs };
Pooling parse_pooling(std::string_view s);
std::string_view to_string(Pooling p);

struct CompareOptions {
    WilcoxonOptions wilcoxon;
    StarThresholds stars;
    Pooling pooling = Pooling::paired_runs;
};

struct RowComparison {
    RunStat a;
    RunStat b;
    WilcoxonResult test;
    std::string star;
    int winner = -1;  // 0 = a, 1 = b, -1 = tie
    std::size_t n_pairs = 0;
    std::size_t excluded = 0;  // question-runs without a defined score on either side
};

// Row keys: "<category>/<openness>" per bucket plus "average/open" and "average/closed",
// where averages weight every question equally.
using ComparisonResult = std::map<std::string, RowComparison>;

using Runs = std::vector<std::vector<metrics::QuestionScore>>;

// Per-run bucket means (and the two question-weighted averages) for one inference.
RunMeans run_means(std::span<const metrics::QuestionScore> run);

ComparisonResult compare_systems(const Runs& a, const Runs& b, const CompareOptions& opts = {});

}  // namespace cxrkit::stats
