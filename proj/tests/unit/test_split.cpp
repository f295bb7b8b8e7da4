#include <doctest.h>

#include "cxrkit/error.hpp"
#include "cxrkit/split.hpp"
#include "oracles.hpp"

using namespace cxrkit;
using namespace cxrkit::split;

namespace {

std::vector<ImageRecord> two_patients() {
    return {{"imgB", "P1", "s1", ""}, {"imgA", "P1", "s2", ""}, {"imgC", "P2", "s3", ""},
            {"imgD", "P3", "s4", ""}};
}

QARecord qa(const std::string& id, const std::string& img, QACategory c, const std::string& a) {
    QARecord r;
    r.qa_id = id;
    r.image_id = img;
    r.question = "q?";
    r.answer = a;
    r.category = c;
    r.openness = classify_openness(a);
    return r;
}

using S = std::set<std::string>;

}  // namespace

TEST_CASE("make_test_split picks the lexicographically smallest image per patient") {
    const auto m = make_test_split(two_patients(), {"P1", "P2"});
    CHECK(m.test_image_ids == S{"imgA", "imgC"});
    CHECK(m.extended_test_image_ids == S{"imgA", "imgB", "imgC"});
    CHECK(m.train_image_ids == S{"imgD"});
    CHECK_NOTHROW(check_manifest(m, two_patients()));
}

TEST_CASE("make_test_split: empty selection puts everything in train") {
    const auto m = make_test_split(two_patients(), {});
    CHECK(m.test_image_ids.empty());
    CHECK(m.extended_test_image_ids.empty());
    CHECK(m.train_image_ids.size() == 4);
}

TEST_CASE("make_test_split: unknown test patient names the patient") {
    try {
        make_test_split(two_patients(), {"P9"});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("P9") != std::string::npos);
    }
}

TEST_CASE("select_qas by partition") {
    const auto m = make_test_split(two_patients(), {"P1", "P2"});
    const std::vector<QARecord> qas = {qa("1", "imgA", QACategory::presence, "yes"),
                                       qa("2", "imgB", QACategory::presence, "no"),
                                       qa("3", "imgC", QACategory::view, "frontal"),
                                       qa("4", "imgD", QACategory::level, "mild")};
    const auto test = select_qas(m, qas, Partition::test);
    REQUIRE(test.size() == 2);
    CHECK(test[0].image_id == "imgA");
    CHECK(test[1].image_id == "imgC");
    const auto train = select_qas(m, qas, Partition::train);
    const auto ext = select_qas(m, qas, Partition::extended_test);
    CHECK(train.size() == 1);
    CHECK(ext.size() == 3);
    for (const auto& t : train)
        for (const auto& e : ext) CHECK(t.qa_id != e.qa_id);
}

TEST_CASE("filter_categories") {
    const std::vector<QARecord> qas = {qa("1", "a", QACategory::difference, "new effusion"),
                                       qa("2", "a", QACategory::abnormality, "yes"),
                                       qa("3", "a", QACategory::type, "mild")};
    const auto no_diff = filter_categories(qas, {QACategory::difference});
    CHECK(no_diff.size() == 2);
    for (const auto& r : no_diff) CHECK(r.category != QACategory::difference);
    CHECK(filter_categories(qas, {}) == qas);
    CHECK(filter_categories(qas, {QACategory::abnormality}).size() == 2);
}

TEST_CASE("summarize: 3 of 10 abnormality gives 30.0 percent") {
    std::vector<QARecord> qas;
    for (int i = 0; i < 3; ++i) qas.push_back(qa(std::to_string(i), "a", QACategory::abnormality, "yes"));
    for (int i = 3; i < 10; ++i) qas.push_back(qa(std::to_string(i), "a", QACategory::location, "left"));
    const auto s = summarize(qas, {"a"});
    CHECK(s.total == 10);
    CHECK(s.image_count == 1);
    CHECK(s.category_percent(QACategory::abnormality) == doctest::Approx(30.0));
    CHECK(s.category_percent(QACategory::location) == doctest::Approx(70.0));
    CHECK(s.open_total == 7);
    CHECK(s.closed_total == 3);
    CHECK(s.closed_percent(QACategory::abnormality) == doctest::Approx(100.0));
    CHECK(s.open_percent(QACategory::location) == doctest::Approx(100.0));
    const auto table = render_stats("fixture", s);
    CHECK(table.find("30.0") != std::string::npos);
}

TEST_CASE("summarize: empty input gives zeros") {
    const auto s = summarize({}, {});
    CHECK(s.total == 0);
    for (auto c : kAllCategories) {
        CHECK(s.category_percent(c) == 0.0);
        CHECK(s.open_percent(c) == 0.0);
        CHECK(s.closed_percent(c) == 0.0);
    }
}

TEST_CASE("seeded fraction sampling is deterministic and sized") {
    const auto c = oracle::make_corpus(21, 200);
    const auto a = sample_test_patients(c.images, 0.25, 99);
    const auto b = sample_test_patients(c.images, 0.25, 99);
    const auto d = sample_test_patients(c.images, 0.25, 100);
    CHECK(a == b);
    CHECK(a.size() == 50);
    CHECK(a != d);
}

TEST_CASE("make_split rejects an explicit list combined with a fraction") {
    SplitConfig cfg;
    cfg.test_patient_ids = {"P1"};
    cfg.test_fraction = 0.5;
    CHECK_THROWS_AS(make_split(two_patients(), cfg), ContractError);
}

TEST_CASE("fingerprint: stable under repetition, sensitive to config") {
    SplitConfig cfg;
    cfg.test_patient_ids = {"P1"};
    const auto m1 = make_split(two_patients(), cfg);
    const auto m2 = make_split(two_patients(), cfg);
    CHECK(m1.fingerprint == m2.fingerprint);
    cfg.test_patient_ids = {"P2"};
    CHECK(make_split(two_patients(), cfg).fingerprint != m1.fingerprint);
    SplitConfig cfg2;
    cfg2.test_patient_ids = {"P1"};
    cfg2.drop_categories = {};
    CHECK(make_split(two_patients(), cfg2).fingerprint != m1.fingerprint);
}

TEST_CASE("manifest JSON round trip") {
    SplitConfig cfg;
    cfg.test_fraction = 0.5;
    cfg.seed = 17;
    const auto c = oracle::make_corpus(8, 30);
    const auto m = make_split(c.images, cfg);
    CHECK(manifest_from_json(to_json(m)) == m);
}

TEST_CASE("check_manifest detects a corrupted manifest") {
    auto m = make_test_split(two_patients(), {"P1", "P2"});
    m.train_image_ids.insert("imgA");
    CHECK_THROWS_AS(check_manifest(m, two_patients()), ContractError);
}
