#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxrkit/stats.hpp"

namespace cxrkit::report {

struct ReportMeta {
    std::string label_a = "A";
    std::string label_b = "B";
    std::string config_fingerprint;
    std::string template_version;
    std::uint64_t seed = 0;
    stats::CompareOptions options;
};

// Table row order: categories in canonical order, open before closed, then the two averages.
std::vector<std::string> row_order(const stats::ComparisonResult& cmp);
std::vector<std::string> row_order(const stats::RunSummary& summary);

// "Abnormality (O)", "Average (C)", ...
std::string row_title(const std::string& key);

// "41.7 (0.3)" from fractions; star appended verbatim.
std::string render_cell(double mean, double stddev, const std::string& star = {});

std::string render_row(const std::string& title, const std::string& cell_a,
                       const std::string& cell_b, const std::string& winner);

// Structured report: metadata, full-precision rows, and the rendered cells.
nlohmann::json build_report(const stats::Runs& a, const stats::Runs& b, const ReportMeta& meta);

std::string render_table(const nlohmann::json& report);

// Recomputes every row from per-question scores and lists disagreements with the report
// (tolerance 1e-9 on means, deviations and p-values; exact on stars and rendered cells).
std::vector<std::string> audit_report(const nlohmann::json& report, const stats::Runs& a,
                                      const stats::Runs& b, double tol = 1e-9);

// ---------------------------------------------------------------------------
// AUC table
// ---------------------------------------------------------------------------

struct AucRow {
    std::string condition;
    std::optional<double> auc;  // empty when a class is missing
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

// Wide CSV with "<condition>_score" and "<condition>_label" column pairs. Rows with an empty
// score or a label other than 0/1 are skipped for that condition.
std::vector<AucRow> auc_table(std::istream& csv);

// "Atelectasis" style heading over two-decimal values.
std::string render_auc(const std::vector<AucRow>& rows);
nlohmann::json to_json(const std::vector<AucRow>& rows);

std::string display_name(const std::string& condition);  // lung_opacity -> Lung Opacity

}  // namespace cxrkit::report
