#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cxrkit/corpus.hpp"

namespace cxrkit::split {

inline constexpr std::string_view kSelectionRule = "lexicographic_min_image_id";

struct SplitConfig {
    // Either an explicit patient list or a sampling fraction (with seed) picks the test patients.
    std::set<std::string> test_patient_ids;
    std::optional<double> test_fraction;
    std::uint64_t seed = 0;
    std::set<QACategory> drop_categories = {QACategory::difference};
    std::string selection_rule{kSelectionRule};

    bool operator==(const SplitConfig&) const = default;
};

struct SplitManifest {
    std::set<std::string> train_image_ids;
    std::set<std::string> test_image_ids;
    std::set<std::string> extended_test_image_ids;
    SplitConfig config;
    std::string fingerprint;

    bool operator==(const SplitManifest&) const = default;
};

enum class Partition { train, test, extended_test };
std::string_view to_string(Partition p);
Partition parse_partition(std::string_view s);

std::vector<QARecord> filter_categories(std::span<const QARecord> qas,
                                        const std::set<QACategory>& drop);

// Deterministic seeded patient sample: ranks patients by a keyed hash and keeps the first
// round(fraction * n_patients).
std::set<std::string> sample_test_patients(std::span<const ImageRecord> images, double fraction,
                                           std::uint64_t seed);

// Test set = lexicographically smallest image_id of each test patient; extended test = all of
// their images; train = every image of the remaining patients.
SplitManifest make_test_split(std::span<const ImageRecord> images,
                              const std::set<std::string>& test_patient_ids);

// Resolves the test patients from cfg (explicit list or seeded fraction) and records cfg.
SplitManifest make_split(std::span<const ImageRecord> images, const SplitConfig& cfg);

std::vector<QARecord> select_qas(const SplitManifest& manifest, std::span<const QARecord> qas,
                                 Partition partition);

const std::set<std::string>& partition_ids(const SplitManifest& m, Partition p);

// Throws ContractError if a manifest invariant does not hold against the image list.
void check_manifest(const SplitManifest& m, std::span<const ImageRecord> images);

struct DatasetStats {
    std::size_t total = 0;
    std::size_t image_count = 0;
    std::array<std::size_t, kAllCategories.size()> by_category{};
    std::array<std::size_t, kAllCategories.size()> open_by_category{};
    std::array<std::size_t, kAllCategories.size()> closed_by_category{};
    std::size_t open_total = 0;
    std::size_t closed_total = 0;

    double category_percent(QACategory c) const;
    double open_percent(QACategory c) const;    // share of open questions
    double closed_percent(QACategory c) const;  // share of closed questions
};

DatasetStats summarize(std::span<const QARecord> qas, const std::set<std::string>& images);

// Table-style rendering: total and one-decimal percentages per category, rows for all/open/closed.
std::string render_stats(const std::string& label, const DatasetStats& stats);

nlohmann::json to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetStats& s);

}  // namespace cxrkit::split
