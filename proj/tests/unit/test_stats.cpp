#include <doctest.h>

#include <random>

#include "cxrkit/error.hpp"
#include "cxrkit/stats.hpp"
#include "oracles.hpp"

using namespace cxrkit;
using namespace cxrkit::stats;
using metrics::QuestionScore;

namespace {

// One run of open "level" scores, qa ids "q0".."q{n-1}".
std::vector<QuestionScore> run_of(const std::vector<double>& values, const std::string& run_id,
                                  QACategory cat = QACategory::level, Openness o = Openness::open) {
    std::vector<QuestionScore> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        QuestionScore s;
        s.qa_id = "q" + std::to_string(i);
        s.category = cat;
        s.openness = o;
        s.metric = o == Openness::open ? metrics::Metric::token_recall : metrics::Metric::accuracy;
        s.value = values[i];
        s.run_id = run_id;
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST_CASE("wilcoxon: all-positive differences") {
    const std::vector<double> d = {1, 2, 3, 4, 5};
    const auto r = wilcoxon_signed_rank(d);
    CHECK(r.w_statistic == 0.0);
    CHECK(r.w_plus == 15.0);
    CHECK(r.method == Method::exact);
    CHECK(r.p_value == doctest::Approx(0.0625).epsilon(1e-15));
    CHECK(r.p_value == doctest::Approx(oracle::wilcoxon_brute_force_p(d)).epsilon(1e-15));
}

TEST_CASE("wilcoxon: tied pair with opposite signs") {
    const std::vector<double> d = {1, -1};
    const auto r = wilcoxon_signed_rank(d);
    CHECK(r.w_plus == 1.5);
    CHECK(r.w_minus == 1.5);
    CHECK(r.p_value == 1.0);
}

TEST_CASE("wilcoxon: all zero differences are degenerate") {
    const std::vector<double> d = {0, 0, 0};
    const auto r = wilcoxon_signed_rank(d);
    CHECK(r.degenerate);
    CHECK(r.p_value == 1.0);
    CHECK(r.method == Method::exact);
    CHECK(r.n == 3);
    CHECK(r.n_effective == 0);
    CHECK(r.zero_method == "wilcox");
}

TEST_CASE("wilcoxon: zeros are dropped before ranking") {
    const std::vector<double> d = {0, 1, 0, 2, 3};
    const auto r = wilcoxon_signed_rank(d);
    CHECK(r.n == 5);
    CHECK(r.n_effective == 3);
    CHECK(r.w_plus == 6.0);
    CHECK(r.p_value == doctest::Approx(0.25));
}

TEST_CASE("wilcoxon: empty sample is a contract violation") {
    CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>{}), ContractError);
}

TEST_CASE("wilcoxon: paired sample uses b minus a") {
    PairedSample s{{"a", "b", "c"}, {0.1, 0.2, 0.3}, {0.2, 0.4, 0.6}};
    const auto r = wilcoxon_signed_rank(s);
    CHECK(r.w_minus == 0.0);
    CHECK(r.w_plus == 6.0);
}

TEST_CASE("wilcoxon: normal approximation beyond the exact limit") {
    std::vector<double> d;
    for (int i = 1; i <= 40; ++i) d.push_back(i % 3 == 0 ? -i : i);
    const auto r = wilcoxon_signed_rank(d);
    CHECK(r.method == Method::normal_approx);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value <= 1.0);
    CHECK(r.z >= 0.0);
}

TEST_CASE("wilcoxon: one-sided alternatives") {
    const std::vector<double> d = {1, 2, 3, 4, 5};
    WilcoxonOptions g;
    g.alternative = Alternative::greater;
    CHECK(wilcoxon_signed_rank(d, g).p_value == doctest::Approx(1.0 / 32.0));
    WilcoxonOptions l;
    l.alternative = Alternative::less;
    CHECK(wilcoxon_signed_rank(d, l).p_value == doctest::Approx(1.0));
}

TEST_CASE("wilcoxon: a positive shift keeps W- at zero") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> d(15);
    for (auto& x : d) x = u(rng);
    for (double shift : {0.0, 0.5, 2.0, 10.0}) {
        std::vector<double> s = d;
        for (auto& x : s) x += shift;
        CHECK(wilcoxon_signed_rank(s).w_minus == 0.0);
    }
}

TEST_CASE("summarize_runs: mean and population std") {
    std::vector<RunMeans> runs = {{{"x", 41.4}}, {{"x", 41.7}}, {{"x", 42.0}}};
    const auto s = summarize_runs(runs);
    CHECK(s.at("x").mean == doctest::Approx(41.7));
    CHECK(s.at("x").stddev == doctest::Approx(oracle::population_stddev({41.4, 41.7, 42.0})));
    CHECK(s.at("x").stddev == doctest::Approx(0.24494897).epsilon(1e-6));

    std::vector<RunMeans> single = {{{"x", 0.3}}};
    CHECK(summarize_runs(single).at("x").stddev == 0.0);

    std::vector<RunMeans> mismatched = {{{"x", 0.3}}, {{"y", 0.3}}};
    CHECK_THROWS_AS(summarize_runs(mismatched), ContractError);
}

TEST_CASE("star thresholds are strict") {
    CHECK(star_for(0.0009) == "**");
    CHECK(star_for(0.001) == "*");
    CHECK(star_for(0.049) == "*");
    CHECK(star_for(0.05) == "");
    CHECK(star_for(0.5) == "");
}

TEST_CASE("compare: B = A + 0.1 over 200 questions earns two stars") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 0.9);
    Runs a, b;
    for (int k = 0; k < 3; ++k) {
        std::vector<double> av(200), bv(200);
        for (int i = 0; i < 200; ++i) {
            av[i] = u(rng);
            bv[i] = av[i] + 0.1;
        }
        a.push_back(run_of(av, "A/run_" + std::to_string(k + 1)));
        b.push_back(run_of(bv, "B/run_" + std::to_string(k + 1)));
    }
    const auto cmp = compare_systems(a, b);
    const auto& row = cmp.at("level/open");
    CHECK(row.test.w_minus == 0.0);
    CHECK(row.test.p_value < 0.001);
    CHECK(row.star == "**");
    CHECK(row.winner == 1);
    CHECK(row.n_pairs == 600);
    CHECK(cmp.at("average/open").star == "**");

    // The exact path agrees at n = 20: only one of 2^20 sign patterns is as extreme per side.
    std::vector<double> d(20, 0.1);
    for (int i = 0; i < 20; ++i) d[i] += 0.001 * i;
    CHECK(wilcoxon_signed_rank(d).p_value == doctest::Approx(2.0 / 1048576.0));
}

TEST_CASE("compare: identical systems get no stars") {
    Runs a = {run_of({0.2, 0.4, 0.9}, "r1")};
    const auto cmp = compare_systems(a, a);
    const auto& row = cmp.at("level/open");
    CHECK(row.test.degenerate);
    CHECK(row.star.empty());
    CHECK(row.winner == -1);
}

TEST_CASE("compare: qa id mismatch lists the symmetric difference") {
    Runs a = {run_of({0.2, 0.4}, "r1")};
    Runs b = {run_of({0.2, 0.4, 0.5}, "r1")};
    try {
        compare_systems(a, b);
        FAIL("expected a contract error");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("q2") != std::string::npos);
    }
}

TEST_CASE("compare: unequal run counts rejected under paired runs, allowed when averaging") {
    Runs a = {run_of({0.2, 0.4}, "r1"), run_of({0.3, 0.4}, "r2")};
    Runs b = {run_of({0.5, 0.6}, "r1")};
    CHECK_THROWS_AS(compare_systems(a, b), ContractError);
    CompareOptions o;
    o.pooling = Pooling::mean_over_runs;
    const auto cmp = compare_systems(a, b, o);
    CHECK(cmp.at("level/open").n_pairs == 2);
}

TEST_CASE("compare: averages weight questions equally across buckets") {
    auto ra = run_of({1.0, 1.0, 1.0}, "r1", QACategory::level);
    auto extra = run_of({0.0}, "r1", QACategory::type);
    extra[0].qa_id = "t0";
    ra.push_back(extra[0]);
    const auto means = run_means(ra);
    CHECK(means.at("level/open") == 1.0);
    CHECK(means.at("type/open") == 0.0);
    CHECK(means.at("average/open") == doctest::Approx(0.75));
}

TEST_CASE("compare: undefined scores are excluded from pairs and counted") {
    auto ra = run_of({0.2, 0.4, 0.6}, "r1");
    auto rb = run_of({0.3, 0.5, 0.7}, "r1");
    rb[1].value.reset();
    const auto cmp = compare_systems(Runs{ra}, Runs{rb});
    CHECK(cmp.at("level/open").n_pairs == 2);
    CHECK(cmp.at("level/open").excluded == 1);
}
