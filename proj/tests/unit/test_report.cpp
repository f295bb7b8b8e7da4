#include <doctest.h>

#include <random>
#include <sstream>

#include "cxrkit/report.hpp"
#include "oracles.hpp"

using namespace cxrkit;
using namespace cxrkit::report;
using metrics::QuestionScore;

namespace {

stats::Runs runs_for(const std::vector<std::vector<double>>& per_run, QACategory cat, Openness o) {
    stats::Runs out;
    for (std::size_t k = 0; k < per_run.size(); ++k) {
        std::vector<QuestionScore> run;
        for (std::size_t i = 0; i < per_run[k].size(); ++i) {
            QuestionScore s;
            s.qa_id = "q" + std::to_string(i);
            s.category = cat;
            s.openness = o;
            s.metric = o == Openness::open ? metrics::Metric::token_recall : metrics::Metric::accuracy;
            s.value = per_run[k][i];
            s.run_id = "run_" + std::to_string(k + 1);
            run.push_back(s);
        }
        out.push_back(run);
    }
    return out;
}

}  // namespace

TEST_CASE("cell rendering") {
    CHECK(render_cell(0.761, 0.002) == "76.1 (0.2)");
    CHECK(render_cell(0.777, 0.001, "**") == "77.7 (0.1)**");
    CHECK(render_cell(1.0, 0.0) == "100.0 (0.0)");
}

TEST_CASE("row titles") {
    CHECK(row_title("presence/closed") == "Presence (C)");
    CHECK(row_title("abnormality/open") == "Abnormality (O)");
    CHECK(row_title("average/closed") == "Average (C)");
}

TEST_CASE("layout fixture: Presence (C) 76.1 (0.2) versus 77.7 (0.1)**") {
    const auto row = render_row(row_title("presence/closed"), render_cell(0.761, 0.002),
                                render_cell(0.777, 0.001, "**"), "Enhanced");
    CHECK(row == "Presence (C)       76.1 (0.2)       77.7 (0.1)**     Enhanced");
}

TEST_CASE("report rows follow table order and star the winner") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 0.8);
    std::vector<std::vector<double>> a(3, std::vector<double>(60)), b = a;
    for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 60; ++i) {
            a[k][i] = u(rng);
            b[k][i] = a[k][i] + 0.2;
        }
    auto ra = runs_for(a, QACategory::type, Openness::open);
    auto rb = runs_for(b, QACategory::type, Openness::open);
    const auto ra2 = runs_for({{1, 0, 1}, {1, 0, 1}, {1, 0, 1}}, QACategory::presence, Openness::closed);
    for (int k = 0; k < 3; ++k) {
        for (auto s : ra2[k]) {
            s.qa_id = "p" + s.qa_id;
            ra[k].push_back(s);
            rb[k].push_back(s);
        }
    }
    ReportMeta meta;
    meta.label_a = "Basic";
    meta.label_b = "Enhanced";
    const auto rep = build_report(ra, rb, meta);
    const auto& rows = rep.at("rows");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].at("key") == "presence/closed");
    CHECK(rows[1].at("key") == "type/open");
    CHECK(rows[2].at("key") == "average/open");
    CHECK(rows[3].at("key") == "average/closed");
    CHECK(rows[1].at("winner") == "b");
    CHECK(rows[1].at("star") == "**");
    CHECK(rows[1].at("cells").at("b").get<std::string>().ends_with("**"));
    CHECK(rows[0].at("winner") == "tie");
    CHECK(rows[0].at("star") == "");

    const auto table = render_table(rep);
    CHECK(table.find("Basic") != std::string::npos);
    CHECK(table.find("Type (O)") != std::string::npos);
    CHECK(table.find("** p < 0.001") != std::string::npos);

    CHECK(audit_report(rep, ra, rb).empty());
    auto tampered = rep;
    tampered["rows"][1]["b"]["mean"] = 0.0;
    CHECK_FALSE(audit_report(tampered, ra, rb).empty());
}

TEST_CASE("display names") {
    CHECK(display_name("lung_opacity") == "Lung Opacity");
    CHECK(display_name("enlarged_cardiomediastinum") == "Enlarged Cardiomediastinum");
}

TEST_CASE("AUC table: perfect separation and undefined conditions") {
    std::istringstream csv(
        "atelectasis_score,atelectasis_label,edema_score,edema_label\n"
        "0.9,1,0.2,0\n"
        "0.8,1,0.1,0\n"
        "0.1,0,0.3,0\n"
        "0.2,0,,1\n");
    const auto rows = auc_table(csv);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].condition == "atelectasis");
    CHECK(rows[0].auc == 1.0);
    CHECK(rows[0].positives == 2);
    CHECK_FALSE(rows[1].auc);
    const auto text = render_auc(rows);
    CHECK(text.find("1.00") != std::string::npos);
    CHECK(text.find("n/a") != std::string::npos);
}

TEST_CASE("AUC layout fixture: Atelectasis 0.88, Edema 0.92, Fracture 0.74") {
    const std::vector<AucRow> rows = {{"atelectasis", 0.88, 1, 1}, {"edema", 0.92, 1, 1}, {"fracture", 0.74, 1, 1}};
    CHECK(render_auc(rows) ==
          "Atelectasis  Edema  Fracture\n"
          "0.88         0.92   0.74\n");
}

TEST_CASE("AUC: random labels give about one half") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::ostringstream csv;
    csv << "nodule_score,nodule_label\n";
    for (int i = 0; i < 1000; ++i) csv << u(rng) << ',' << (coin(rng) ? 1 : 0) << '\n';
    std::istringstream in(csv.str());
    const auto rows = auc_table(in);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].auc);
    CHECK(*rows[0].auc == doctest::Approx(0.5).epsilon(0.1));  // |auc - 0.5| <= 0.05
    CHECK(std::fabs(*rows[0].auc - 0.5) <= 0.05);
}
