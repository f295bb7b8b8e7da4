#include <doctest.h>

#include "cxrkit/corpus.hpp"
#include "cxrkit/error.hpp"

using namespace cxrkit;

namespace {

ExpertPrediction expert(const std::string& id) {
    ExpertPrediction e;
    e.image_id = id;
    e.age_years = 50;
    return e;
}

QARecord qa(const std::string& id, const std::string& img, const std::string& answer = "yes") {
    QARecord r;
    r.qa_id = id;
    r.image_id = img;
    r.question = "is there effusion?";
    r.answer = answer;
    r.category = QACategory::presence;
    r.openness = classify_openness(answer);
    return r;
}

std::vector<ImageRecord> three_images() {
    return {{"img1", "p1", "s1", ""}, {"img2", "p1", "s2", ""}, {"img3", "p2", "s3", ""}};
}

}  // namespace

TEST_CASE("label sets round-trip through their string forms") {
    for (QACategory c : kAllCategories) CHECK(parse_category(to_string(c)) == c);
    CHECK(parse_category(" Presence ") == QACategory::presence);
    CHECK_FALSE(parse_category("severity"));
    CHECK(parse_race("White") == Race::white);
    CHECK(to_string(Race::asian) == "Asian");
    CHECK_FALSE(parse_race("Hispanic"));
    CHECK(parse_view("Lateral") == ViewPosition::lateral);
    CHECK(parse_openness("closed") == Openness::closed);
}

TEST_CASE("condition keys") {
    CHECK(kConditions.size() == 18);
    CHECK(condition_index("cardiomegaly") == 0u);
    CHECK(condition_index("consolidation") == 17u);
    CHECK_FALSE(condition_index("Cardiomegaly"));
    CHECK(condition_phrase("enlarged_cardiomediastinum") == "enlarged cardiomediastinum");
}

TEST_CASE("classify_openness") {
    CHECK(classify_openness("yes") == Openness::closed);
    CHECK(classify_openness("Yes.") == Openness::closed);
    CHECK(classify_openness(" NO! ") == Openness::closed);
    CHECK(classify_openness("in the left lower lobe") == Openness::open);
    CHECK(classify_openness("yes, small") == Openness::open);
    CHECK_THROWS_AS(classify_openness(""), ValidationError);
    CHECK_THROWS_AS(classify_openness("   "), ValidationError);
}

TEST_CASE("normalize_answer strips only trailing punctuation") {
    CHECK(normalize_answer("  Yes.!? ") == "yes");
    CHECK(normalize_answer("e.g. this") == "e.g. this");
}

TEST_CASE("validate: consistent corpus yields an empty report") {
    const auto images = three_images();
    const std::vector<QARecord> qas = {qa("q1", "img1"), qa("q2", "img3", "left lobe")};
    const std::vector<ExpertPrediction> ex = {expert("img1"), expert("img2"), expert("img3")};
    const auto rep = validate(images, qas, ex);
    CHECK(rep.valid());
    CHECK(rep.image_count == 3);
    CHECK(rep.qa_count == 2);
    CHECK(rep.expert_count == 3);
    CHECK_NOTHROW(require_valid(rep));
}

TEST_CASE("validate: qa referencing a missing image") {
    const auto images = three_images();
    const std::vector<QARecord> qas = {qa("q1", "imgX")};
    const auto rep = validate(images, qas, {});
    REQUIRE(rep.dangling.size() == 1);
    CHECK(rep.dangling[0].kind == "qa");
    CHECK(rep.dangling[0].image_id == "imgX");
    CHECK(rep.duplicates.empty());
    CHECK_THROWS_AS(require_valid(rep), ValidationError);
}

TEST_CASE("validate: two images sharing an id") {
    auto images = three_images();
    images.push_back({"img1", "p9", "s9", ""});
    const auto rep = validate(images, {}, {});
    REQUIRE(rep.duplicates.size() == 1);
    CHECK(rep.duplicates[0].kind == "image");
    CHECK(rep.duplicates[0].id == "img1");
    CHECK(rep.duplicates[0].occurrences == 2);
}

TEST_CASE("validate: dangling expert and invariant violations") {
    const auto images = three_images();
    auto bad = qa("q1", "img1");
    bad.openness = Openness::open;  // "yes" must be closed
    const std::vector<QARecord> qas = {bad};
    const std::vector<ExpertPrediction> ex = {expert("nope")};
    const auto rep = validate(images, qas, ex);
    CHECK(rep.dangling.size() == 1);
    CHECK(rep.dangling[0].kind == "expert");
    CHECK(rep.invalid.size() >= 1);
    CHECK_FALSE(rep.valid());
    CHECK(rep.summary().find("dangling=1") != std::string::npos);
}

TEST_CASE("ExpertPrediction::prob looks up by key") {
    auto e = expert("a");
    e.disease_probs[13] = 0.61;
    CHECK(e.prob("effusion") == doctest::Approx(0.61));
}
