#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cxrkit {

// ---------------------------------------------------------------------------
// Closed label sets
// ---------------------------------------------------------------------------

enum class QACategory { abnormality, presence, view, location, level, type, difference };

inline constexpr std::array<QACategory, 7> kAllCategories = {
    QACategory::abnormality, QACategory::presence, QACategory::view,      QACategory::location,
    QACategory::level,       QACategory::type,     QACategory::difference};

std::string_view to_string(QACategory c);
std::optional<QACategory> parse_category(std::string_view s);  // case-insensitive, trimmed

enum class Openness { open, closed };

std::string_view to_string(Openness o);
std::optional<Openness> parse_openness(std::string_view s);

enum class Race { asian, black, white };
std::string_view to_string(Race r);  // "Asian", "Black", "White"
std::optional<Race> parse_race(std::string_view s);

enum class ViewPosition { frontal, lateral };
std::string_view to_string(ViewPosition v);  // "Frontal", "Lateral"
std::optional<ViewPosition> parse_view(std::string_view s);

// The 18 expert-model conditions in canonical order. Keys are lowercase snake_case.
inline constexpr std::size_t kNumConditions = 18;
inline constexpr std::array<std::string_view, kNumConditions> kConditions = {
    "cardiomegaly",  "atelectasis",        "pneumonia",   "infiltration",
    "fracture",      "enlarged_cardiomediastinum",        "lung_opacity",
    "pneumothorax",  "emphysema",          "hernia",      "lung_lesion",
    "pleural_thickening",                  "edema",       "effusion",
    "fibrosis",      "nodule",             "mass",        "consolidation"};

std::optional<std::size_t> condition_index(std::string_view key);
// "enlarged_cardiomediastinum" -> "enlarged cardiomediastinum"
std::string condition_phrase(std::string_view key);

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct ImageRecord {
    std::string image_id;
    std::string patient_id;
    std::string study_id;
    std::string image_path;

    bool operator==(const ImageRecord&) const = default;
};

struct QARecord {
    std::string qa_id;
    std::string image_id;
    std::string patient_id;  // may be empty when the source table carries none
    std::string question;
    std::string answer;
    QACategory category = QACategory::abnormality;
    Openness openness = Openness::open;

    bool operator==(const QARecord&) const = default;
};

struct ExpertPrediction {
    std::string image_id;
    std::array<double, kNumConditions> disease_probs{};  // indexed like kConditions
    double age_years = 0.0;
    Race race = Race::white;
    ViewPosition view = ViewPosition::frontal;

    double prob(std::string_view condition) const;
    bool operator==(const ExpertPrediction&) const = default;
};

// Normalizes an answer for the yes/no rule: lowercase, trim, drop trailing . , ! ?
std::string normalize_answer(std::string_view answer);

// Throws ValidationError on an empty answer.
Openness classify_openness(std::string_view answer);

// ---------------------------------------------------------------------------
// Referential integrity
// ---------------------------------------------------------------------------

struct DanglingRef {
    std::string kind;  // "qa" or "expert"
    std::string record_id;
    std::string image_id;
    auto operator<=>(const DanglingRef&) const = default;
};

struct DuplicateId {
    std::string kind;  // "image", "qa" or "expert"
    std::string id;
    std::size_t occurrences = 0;
    auto operator<=>(const DuplicateId&) const = default;
};

struct InvalidRecord {
    std::string kind;
    std::string id;
    std::string reason;
    auto operator<=>(const InvalidRecord&) const = default;
};

struct CorpusReport {
    std::size_t image_count = 0;
    std::size_t qa_count = 0;
    std::size_t expert_count = 0;
    std::vector<DanglingRef> dangling;     // sorted
    std::vector<DuplicateId> duplicates;   // sorted
    std::vector<InvalidRecord> invalid;    // sorted; type-invariant violations

    bool valid() const { return dangling.empty() && duplicates.empty() && invalid.empty(); }
    std::string summary() const;
};

CorpusReport validate(std::span<const ImageRecord> images, std::span<const QARecord> qas,
                      std::span<const ExpertPrediction> experts);

// Throws ValidationError carrying the report summary when the corpus is not valid.
void require_valid(const CorpusReport& report);

}  // namespace cxrkit
