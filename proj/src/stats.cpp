#include "cxrkit/stats.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <unordered_map>

#include "cxrkit/error.hpp"

namespace cxrkit::stats {

Alternative parse_alternative(std::string_view s) {
    if (s == "two_sided" || s == "two-sided") return Alternative::two_sided;
    if (s == "greater") return Alternative::greater;
    if (s == "less") return Alternative::less;
    throw ContractError("unknown alternative: " + std::string(s));
}

std::string_view to_string(Alternative a) {
    switch (a) {
        case Alternative::two_sided: return "two_sided";
        case Alternative::greater: return "greater";
        case Alternative::less: return "less";
    }
    return "?";
}

std::string_view to_string(Method m) { return m == Method::exact ? "exact" : "normal_approx"; }

Pooling parse_pooling(std::string_view s) {
    if (s == "paired_runs") return Pooling::paired_runs;
    if (s == "mean_over_runs") return Pooling::mean_over_runs;
    throw ContractError("unknown pooling mode: " + std::string(s));
}

std::string_view to_string(Pooling p) {
    return p == Pooling::paired_runs ? "paired_runs" : "mean_over_runs";
}

namespace {

// Null distribution of W+ over all 2^n sign assignments, on doubled (integer) ranks.
// counts[s] = number of assignments whose doubled W+ equals s.
std::vector<std::uint64_t> signed_rank_counts(std::span<const std::uint32_t> doubled_ranks) {
    std::uint64_t total = 0;
    for (auto r : doubled_ranks) total += r;
    std::vector<std::uint64_t> counts(total + 1, 0);
    counts[0] = 1;
    std::uint64_t reach = 0;
    for (auto r : doubled_ranks) {
        reach += r;
        for (std::uint64_t s = reach; s >= r; --s) counts[s] += counts[s - r];
    }
    return counts;
}

double clamp_p(double p) { return std::clamp(p, DBL_MIN, 1.0); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> d, const WilcoxonOptions& opts) {
    if (d.empty()) throw ContractError("wilcoxon: empty sample");
    WilcoxonResult res;
    res.n = d.size();
    res.alternative = opts.alternative;

    std::vector<double> nz;
    nz.reserve(d.size());
    for (double x : d)
        if (x != 0.0) nz.push_back(x);
    res.n_effective = nz.size();
    if (nz.empty()) {
        res.degenerate = true;
        res.method = Method::exact;
        res.p_value = 1.0;
        return res;
    }

    const std::size_t n = nz.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::fabs(nz[a]) < std::fabs(nz[b]); });

    // Doubled average ranks are integers: tie group [i, j) gets rank (i + 1 + j) / 2.
    std::vector<std::uint32_t> doubled(n);
    double tie_term = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && std::fabs(nz[order[j]]) == std::fabs(nz[order[i]])) ++j;
        const auto r2 = static_cast<std::uint32_t>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) doubled[order[k]] = r2;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }

    std::uint64_t w_plus2 = 0, w_minus2 = 0;
    for (std::size_t k = 0; k < n; ++k) (nz[k] > 0 ? w_plus2 : w_minus2) += doubled[k];
    res.w_plus = 0.5 * static_cast<double>(w_plus2);
    res.w_minus = 0.5 * static_cast<double>(w_minus2);
    res.w_statistic = std::min(res.w_plus, res.w_minus);

    if (n <= opts.exact_max_n) {
        res.method = Method::exact;
        const auto counts = signed_rank_counts(doubled);
        const double total = std::ldexp(1.0, static_cast<int>(n));
        std::uint64_t le = 0, ge = 0;
        for (std::uint64_t s = 0; s < counts.size(); ++s) {
            if (s <= w_plus2) le += counts[s];
            if (s >= w_plus2) ge += counts[s];
        }
        const double p_le = static_cast<double>(le) / total;
        const double p_ge = static_cast<double>(ge) / total;
        switch (opts.alternative) {
            case Alternative::two_sided: res.p_value = std::min(1.0, 2.0 * std::min(p_le, p_ge)); break;
            case Alternative::greater: res.p_value = p_ge; break;
            case Alternative::less: res.p_value = p_le; break;
        }
        res.p_value = clamp_p(res.p_value);
        return res;
    }

    res.method = Method::normal_approx;
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    const double cc = opts.continuity_correction ? 0.5 : 0.0;
    const double dev = res.w_plus - mean;
    switch (opts.alternative) {
        case Alternative::two_sided:
            res.z = std::max(0.0, std::fabs(dev) - cc) / sd;
            res.p_value = std::erfc(res.z / std::sqrt(2.0));
            break;
        case Alternative::greater:
            res.z = (dev - cc) / sd;
            res.p_value = 0.5 * std::erfc(res.z / std::sqrt(2.0));
            break;
        case Alternative::less:
            res.z = (dev + cc) / sd;
            res.p_value = 0.5 * std::erfc(-res.z / std::sqrt(2.0));
            break;
    }
    res.p_value = clamp_p(res.p_value);
    return res;
}

WilcoxonResult wilcoxon_signed_rank(const PairedSample& s, const WilcoxonOptions& opts) {
    if (s.a_values.size() != s.b_values.size() || s.qa_ids.size() != s.a_values.size())
        throw ContractError("paired sample lists differ in length");
    std::set<std::string> ids(s.qa_ids.begin(), s.qa_ids.end());
    if (ids.size() != s.qa_ids.size()) throw ContractError("paired sample has duplicate ids");
    std::vector<double> d(s.a_values.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = s.b_values[i] - s.a_values[i];
    return wilcoxon_signed_rank(d, opts);
}

RunSummary summarize_runs(std::span<const RunMeans> runs) {
    if (runs.empty()) throw ContractError("summarize_runs: no runs supplied");
    RunSummary out;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        if (runs[r].size() != runs[0].size() ||
            !std::equal(runs[r].begin(), runs[r].end(), runs[0].begin(),
                        [](const auto& x, const auto& y) { return x.first == y.first; }))
            throw ContractError("summarize_runs: run " + std::to_string(r) +
                                " has a different bucket set than run 0");
    }
    for (const auto& [key, unused] : runs[0]) {
        RunStat st;
        for (const auto& run : runs) st.runs.push_back(run.at(key));
        const double n = static_cast<double>(st.runs.size());
        double sum = 0.0;
        for (double v : st.runs) sum += v;
        st.mean = sum / n;
        double ss = 0.0;
        for (double v : st.runs) ss += (v - st.mean) * (v - st.mean);
        st.stddev = std::sqrt(ss / n);
        out.emplace(key, std::move(st));
    }
    return out;
}

std::string star_for(double p, const StarThresholds& t) {
    if (p < t.two) return "**";
    if (p < t.one) return "*";
    return "";
}

namespace {

constexpr const char* kAverageOpen = "average/open";
constexpr const char* kAverageClosed = "average/closed";

std::string row_key(const metrics::QuestionScore& s) {
    return metrics::bucket_label({s.category, s.openness});
}

const char* average_key(Openness o) { return o == Openness::open ? kAverageOpen : kAverageClosed; }

using ById = std::unordered_map<std::string, const metrics::QuestionScore*>;

ById index_run(const std::vector<metrics::QuestionScore>& run, const char* system, std::size_t r) {
    ById out;
    for (const auto& s : run)
        if (!out.emplace(s.qa_id, &s).second)
            throw ContractError(std::string("system ") + system + " run " + std::to_string(r) +
                                " scores qa " + s.qa_id + " twice");
    return out;
}

std::set<std::string> id_set(const ById& m) {
    std::set<std::string> out;
    for (const auto& [id, unused] : m) out.insert(id);
    return out;
}

std::string list_ids(const std::set<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) out += ",";
        out += id;
    }
    return out;
}

}  // namespace

RunMeans run_means(std::span<const metrics::QuestionScore> run) {
    const auto agg = metrics::aggregate(run);
    RunMeans out;
    metrics::BucketStat open, closed;
    for (const auto& [bucket, st] : agg) {
        if (st.count == 0) continue;
        out[metrics::bucket_label(bucket)] = st.mean();
        (bucket.openness == Openness::open ? open : closed).merge(st);
    }
    if (open.count) out[kAverageOpen] = open.mean();
    if (closed.count) out[kAverageClosed] = closed.mean();
    return out;
}

ComparisonResult compare_systems(const Runs& a, const Runs& b, const CompareOptions& opts) {
    if (a.empty() || b.empty()) throw ContractError("compare_systems: each system needs >= 1 run");

    std::vector<ById> ia, ib;
    for (std::size_t r = 0; r < a.size(); ++r) ia.push_back(index_run(a[r], "A", r));
    for (std::size_t r = 0; r < b.size(); ++r) ib.push_back(index_run(b[r], "B", r));

    const auto ref = id_set(ia[0]);
    for (std::size_t r = 1; r < ia.size(); ++r)
        if (id_set(ia[r]) != ref)
            throw ContractError("system A run " + std::to_string(r) + " covers a different qa set");
    const auto ref_b = id_set(ib[0]);
    for (std::size_t r = 1; r < ib.size(); ++r)
        if (id_set(ib[r]) != ref_b)
            throw ContractError("system B run " + std::to_string(r) + " covers a different qa set");
    if (ref != ref_b) {
        std::set<std::string> diff;
        std::set_symmetric_difference(ref.begin(), ref.end(), ref_b.begin(), ref_b.end(),
                                      std::inserter(diff, diff.end()));
        throw ContractError("qa_id sets differ between systems: " + list_ids(diff));
    }
    for (const auto& id : ref) {
        const auto& sa = *ia[0].at(id);
        const auto& sb = *ib[0].at(id);
        if (sa.category != sb.category || sa.openness != sb.openness)
            throw ContractError("qa " + id + " has different buckets in the two systems");
    }
    if (opts.pooling == Pooling::paired_runs && a.size() != b.size())
        throw ContractError("paired_runs pooling needs equal run counts (" +
                            std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");

    std::vector<RunMeans> means_a, means_b;
    for (const auto& run : a) means_a.push_back(run_means(run));
    for (const auto& run : b) means_b.push_back(run_means(run));
    const auto sum_a = summarize_runs(means_a);
    const auto sum_b = summarize_runs(means_b);

    std::map<std::string, std::vector<double>> diffs;
    std::map<std::string, std::size_t> excluded;
    auto record = [&](const metrics::QuestionScore& s, std::optional<double> va,
                      std::optional<double> vb) {
        const std::string key = row_key(s);
        const char* avg = average_key(s.openness);
        diffs[key];
        diffs[avg];
        if (!va || !vb) {
            ++excluded[key];
            ++excluded[avg];
            return;
        }
        diffs[key].push_back(*vb - *va);
        diffs[avg].push_back(*vb - *va);
    };

    if (opts.pooling == Pooling::paired_runs) {
        for (std::size_t r = 0; r < a.size(); ++r)
            for (const auto& id : ref) {
                const auto& sa = *ia[r].at(id);
                record(sa, sa.value, ib[r].at(id)->value);
            }
    } else {
        auto mean_of = [](const std::vector<ById>& runs, const std::string& id) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& run : runs)
                if (const auto& v = run.at(id)->value) {
                    sum += *v;
                    ++n;
                }
            return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
        };
        for (const auto& id : ref) record(*ia[0].at(id), mean_of(ia, id), mean_of(ib, id));
    }

    ComparisonResult out;
    for (const auto& [key, d] : diffs) {
        RowComparison row;
        if (auto it = sum_a.find(key); it != sum_a.end()) row.a = it->second;
        if (auto it = sum_b.find(key); it != sum_b.end()) row.b = it->second;
        row.n_pairs = d.size();
        row.excluded = excluded[key];
        if (d.empty()) {
            row.test.degenerate = true;
            row.test.alternative = opts.wilcoxon.alternative;
        } else {
            row.test = wilcoxon_signed_rank(d, opts.wilcoxon);
        }
        row.star = row.test.degenerate ? "" : star_for(row.test.p_value, opts.stars);
        row.winner = row.a.mean > row.b.mean ? 0 : (row.b.mean > row.a.mean ? 1 : -1);
        out.emplace(key, std::move(row));
    }
    return out;
}

}  // namespace cxrkit::stats
