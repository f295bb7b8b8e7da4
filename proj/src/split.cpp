#include "cxrkit/split.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "cxrkit/error.hpp"
#include "cxrkit/text.hpp"

namespace cxrkit::split {

using nlohmann::json;

std::string_view to_string(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::test: return "test";
        case Partition::extended_test: return "extended_test";
    }
    return "?";
}

Partition parse_partition(std::string_view s) {
    if (s == "train") return Partition::train;
    if (s == "test") return Partition::test;
    if (s == "extended_test") return Partition::extended_test;
    throw ContractError("unknown partition: " + std::string(s));
}

std::vector<QARecord> filter_categories(std::span<const QARecord> qas,
                                        const std::set<QACategory>& drop) {
    std::vector<QARecord> out;
    out.reserve(qas.size());
    for (const auto& qa : qas)
        if (!drop.contains(qa.category)) out.push_back(qa);
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string fingerprint(std::span<const ImageRecord> images, const std::set<std::string>& test,
                        const SplitConfig& cfg) {
    std::vector<const ImageRecord*> sorted;
    sorted.reserve(images.size());
    for (const auto& img : images) sorted.push_back(&img);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
        return std::tie(a->image_id, a->patient_id) < std::tie(b->image_id, b->patient_id);
    });

    text::Fnv1a h;
    h.add_field("images");
    for (const auto* img : sorted) h.add_field(img->image_id).add_field(img->patient_id);
    h.add_field("test_patients");
    for (const auto& p : test) h.add_field(p);
    h.add_field("config");
    h.add_field(cfg.selection_rule);
    h.add_field(cfg.test_fraction ? std::to_string(*cfg.test_fraction) : "none");
    h.add_field(std::to_string(cfg.seed));
    for (const auto& p : cfg.test_patient_ids) h.add_field(p);
    h.add_field("drop");
    for (QACategory c : cfg.drop_categories) h.add_field(to_string(c));
    return h.hex();
}

SplitManifest assign(std::span<const ImageRecord> images, const std::set<std::string>& test_patients,
                     const SplitConfig& cfg) {
    std::map<std::string, std::vector<const ImageRecord*>> by_patient;
    for (const auto& img : images) by_patient[img.patient_id].push_back(&img);

    SplitManifest m;
    for (const auto& p : test_patients) {
        const auto it = by_patient.find(p);
        if (it == by_patient.end() || it->second.empty())
            throw ContractError("test patient has no images: " + p);
    }
    for (const auto& [patient, imgs] : by_patient) {
        if (test_patients.contains(patient)) {
            const auto* first = *std::min_element(imgs.begin(), imgs.end(), [](auto* a, auto* b) {
                return a->image_id < b->image_id;
            });
            m.test_image_ids.insert(first->image_id);
            for (const auto* img : imgs) m.extended_test_image_ids.insert(img->image_id);
        } else {
            for (const auto* img : imgs) m.train_image_ids.insert(img->image_id);
        }
    }
    m.config = cfg;
    m.fingerprint = fingerprint(images, test_patients, cfg);
    return m;
}

}  // namespace

std::set<std::string> sample_test_patients(std::span<const ImageRecord> images, double fraction,
                                           std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw ContractError("test fraction outside [0,1]");
    std::set<std::string> patients;
    for (const auto& img : images) patients.insert(img.patient_id);

    std::vector<std::pair<std::uint64_t, const std::string*>> keyed;
    keyed.reserve(patients.size());
    for (const auto& p : patients) {
        const std::uint64_t key = splitmix64(seed ^ text::Fnv1a().add(p).value());
        keyed.emplace_back(key, &p);
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : *a.second < *b.second;
    });
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(keyed.size())));
    std::set<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.insert(*keyed[i].second);
    return out;
}

SplitManifest make_test_split(std::span<const ImageRecord> images,
                              const std::set<std::string>& test_patient_ids) {
    SplitConfig cfg;
    cfg.test_patient_ids = test_patient_ids;
    return assign(images, test_patient_ids, cfg);
}

SplitManifest make_split(std::span<const ImageRecord> images, const SplitConfig& cfg) {
    if (cfg.test_fraction && !cfg.test_patient_ids.empty())
        throw ContractError("split config sets both test_patient_ids and test_fraction");
    const auto patients = cfg.test_fraction
                              ? sample_test_patients(images, *cfg.test_fraction, cfg.seed)
                              : cfg.test_patient_ids;
    return assign(images, patients, cfg);
}

const std::set<std::string>& partition_ids(const SplitManifest& m, Partition p) {
    switch (p) {
        case Partition::train: return m.train_image_ids;
        case Partition::test: return m.test_image_ids;
        case Partition::extended_test: return m.extended_test_image_ids;
    }
    return m.train_image_ids;
}

std::vector<QARecord> select_qas(const SplitManifest& manifest, std::span<const QARecord> qas,
                                 Partition partition) {
    const auto& ids = partition_ids(manifest, partition);
    std::vector<QARecord> out;
    for (const auto& qa : qas)
        if (ids.contains(qa.image_id)) out.push_back(qa);
    return out;
}

void check_manifest(const SplitManifest& m, std::span<const ImageRecord> images) {
    for (const auto& id : m.train_image_ids)
        if (m.extended_test_image_ids.contains(id))
            throw ContractError("image in both train and extended test: " + id);
    for (const auto& id : m.test_image_ids)
        if (!m.extended_test_image_ids.contains(id))
            throw ContractError("test image missing from extended test: " + id);
    std::map<std::string, std::string> patient_of;
    for (const auto& img : images) patient_of[img.image_id] = img.patient_id;
    std::map<std::string, std::string> seen;
    for (const auto& id : m.test_image_ids) {
        const auto it = patient_of.find(id);
        if (it == patient_of.end()) throw ContractError("test image not in corpus: " + id);
        const auto [pos, inserted] = seen.emplace(it->second, id);
        if (!inserted)
            throw ContractError("patient " + it->second + " has two test images: " + pos->second +
                                ", " + id);
    }
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

namespace {

std::size_t idx(QACategory c) { return static_cast<std::size_t>(c); }

double percent(std::size_t part, std::size_t whole) {
    return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

std::string fmt1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

}  // namespace

double DatasetStats::category_percent(QACategory c) const { return percent(by_category[idx(c)], total); }
double DatasetStats::open_percent(QACategory c) const {
    return percent(open_by_category[idx(c)], open_total);
}
double DatasetStats::closed_percent(QACategory c) const {
    return percent(closed_by_category[idx(c)], closed_total);
}

DatasetStats summarize(std::span<const QARecord> qas, const std::set<std::string>& images) {
    DatasetStats s;
    s.total = qas.size();
    s.image_count = images.size();
    for (const auto& qa : qas) {
        const auto i = idx(qa.category);
        ++s.by_category[i];
        if (qa.openness == Openness::open) {
            ++s.open_by_category[i];
            ++s.open_total;
        } else {
            ++s.closed_by_category[i];
            ++s.closed_total;
        }
    }
    return s;
}

std::string render_stats(const std::string& label, const DatasetStats& s) {
    std::vector<QACategory> cats;
    for (QACategory c : kAllCategories)
        if (c != QACategory::difference || s.by_category[idx(c)] > 0) cats.push_back(c);

    std::ostringstream os;
    os << label << " (" << s.image_count << " images)\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s %10s", "", "Total");
    os << buf;
    for (QACategory c : cats) {
        std::snprintf(buf, sizeof buf, " %12s", std::string(to_string(c)).c_str());
        os << buf;
    }
    os << '\n';
    auto row = [&](const char* name, std::size_t total, auto pct) {
        std::snprintf(buf, sizeof buf, "%-10s %10zu", name, total);
        os << buf;
        for (QACategory c : cats) {
            std::snprintf(buf, sizeof buf, " %12s", fmt1(pct(c)).c_str());
            os << buf;
        }
        os << '\n';
    };
    row("#QA Pairs", s.total, [&](QACategory c) { return s.category_percent(c); });
    row("#Open", s.open_total, [&](QACategory c) { return s.open_percent(c); });
    row("#Close", s.closed_total, [&](QACategory c) { return s.closed_percent(c); });
    return os.str();
}

json to_json(const SplitManifest& m) {
    json cfg;
    cfg["selection_rule"] = m.config.selection_rule;
    cfg["seed"] = m.config.seed;
    cfg["test_fraction"] = m.config.test_fraction ? json(*m.config.test_fraction) : json(nullptr);
    cfg["test_patient_ids"] = m.config.test_patient_ids;
    json drop = json::array();
    for (QACategory c : m.config.drop_categories) drop.push_back(std::string(to_string(c)));
    cfg["drop_categories"] = std::move(drop);
    return json{{"config", std::move(cfg)},
                {"fingerprint", m.fingerprint},
                {"train_image_ids", m.train_image_ids},
                {"test_image_ids", m.test_image_ids},
                {"extended_test_image_ids", m.extended_test_image_ids}};
}

SplitManifest manifest_from_json(const json& j) {
    try {
        SplitManifest m;
        const auto& cfg = j.at("config");
        m.config.selection_rule = cfg.at("selection_rule").get<std::string>();
        m.config.seed = cfg.at("seed").get<std::uint64_t>();
        if (!cfg.at("test_fraction").is_null())
            m.config.test_fraction = cfg.at("test_fraction").get<double>();
        m.config.test_patient_ids = cfg.at("test_patient_ids").get<std::set<std::string>>();
        m.config.drop_categories.clear();
        for (const auto& c : cfg.at("drop_categories")) {
            const auto cat = parse_category(c.get<std::string>());
            if (!cat) throw ParseError("unknown category in manifest: " + c.get<std::string>());
            m.config.drop_categories.insert(*cat);
        }
        m.fingerprint = j.at("fingerprint").get<std::string>();
        m.train_image_ids = j.at("train_image_ids").get<std::set<std::string>>();
        m.test_image_ids = j.at("test_image_ids").get<std::set<std::string>>();
        m.extended_test_image_ids = j.at("extended_test_image_ids").get<std::set<std::string>>();
        return m;
    } catch (const json::exception& ex) {
        throw ParseError(std::string("malformed split manifest: ") + ex.what());
    }
}

json to_json(const DatasetStats& s) {
    json cats = json::object();
    for (QACategory c : kAllCategories) {
        const auto i = idx(c);
        cats[std::string(to_string(c))] = {
            {"count", s.by_category[i]},
            {"open", s.open_by_category[i]},
            {"closed", s.closed_by_category[i]},
            {"percent", s.category_percent(c)},
            {"open_percent", s.open_percent(c)},
            {"closed_percent", s.closed_percent(c)},
        };
    }
    return json{{"total", s.total},
                {"images", s.image_count},
                {"open", s.open_total},
                {"closed", s.closed_total},
                {"categories", std::move(cats)}};
}

}  // namespace cxrkit::split
