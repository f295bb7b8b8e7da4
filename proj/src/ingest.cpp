#include "cxrkit/ingest.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>

#include <json.hpp>

#include "cxrkit/error.hpp"
#include "cxrkit/text.hpp"

namespace cxrkit::ingest {

using nlohmann::json;

// ---------------------------------------------------------------------------
// DelimitedReader
// ---------------------------------------------------------------------------

DelimitedReader::DelimitedReader(std::istream& in, char delimiter, std::size_t record_cap)
    : in_(in), delim_(delimiter), cap_(record_cap) {}

int DelimitedReader::get() {
    const int c = in_.rdbuf()->sbumpc();
    if (c == '\n') ++line_;
    return c;
}

int DelimitedReader::peek() { return in_.rdbuf()->sgetc(); }

bool DelimitedReader::next(std::vector<std::string>& fields) {
    constexpr int eof = std::char_traits<char>::eof();
    if (!bom_checked_) {
        bom_checked_ = true;
        if (peek() == 0xEF) {
            get();
            if (get() != 0xBB || get() != 0xBF) throw ParseError("invalid byte-order mark", 1);
        }
    }

    for (;;) {
        fields.clear();
        record_line_ = line_;
        std::size_t bytes = 0;
        std::string field;
        bool any = false;

        auto push = [&](int c) {
            if (++bytes > cap_)
                throw ParseError("record exceeds buffer cap of " + std::to_string(cap_) + " bytes",
                                 record_line_);
            field.push_back(static_cast<char>(c));
        };

        int c = get();
        if (c == eof) return false;
        for (;;) {
            // start of a field
            if (c == '"') {
                any = true;
                for (;;) {
                    c = get();
                    if (c == eof) throw ParseError("unterminated quoted field", record_line_);
                    if (c == '"') {
                        if (peek() == '"') {
                            get();
                            push('"');
                            continue;
                        }
                        break;
                    }
                    push(c);
                }
                c = get();
                if (c == '\r' && peek() == '\n') c = get();
                if (c != delim_ && c != '\n' && c != eof)
                    throw ParseError("unexpected character after closing quote", record_line_);
            } else {
                while (c != delim_ && c != '\n' && c != eof) {
                    if (c == '\r' && peek() == '\n') {
                        c = get();
                        break;
                    }
                    any = true;
                    push(c);
                    c = get();
                }
            }
            fields.push_back(std::move(field));
            field.clear();
            if (c == delim_) {
                any = true;
                c = get();
                continue;
            }
            break;  // newline or eof
        }
        if (!any) continue;  // blank line
        return true;
    }
}

std::string csv_escape(const std::string& field, char delimiter) {
    const bool needs = field.find_first_of(std::string{delimiter, '"', '\n', '\r'}) !=
                           std::string::npos ||
                       (!field.empty() && (field.front() == ' ' || field.back() == ' ' ||
                                           field.front() == '\t' || field.back() == '\t'));
    if (!needs) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

// ---------------------------------------------------------------------------
// Column binding
// ---------------------------------------------------------------------------

namespace {

class Binding {
public:
    Binding(DelimitedReader& reader, const TableSchema& schema,
            std::span<const char* const> fields) {
        if (schema.has_header) {
            std::vector<std::string> header;
            if (!reader.next(header)) throw ParseError("missing header row", 1);
            width_ = header.size();
            for (auto& h : header) h = std::string(text::trim(h));
            for (const char* f : fields) {
                const auto it = schema.columns.find(f);
                const bool explicit_binding = it != schema.columns.end();
                const std::string want = explicit_binding ? it->second : f;
                std::optional<std::size_t> found;
                for (std::size_t i = 0; i < header.size(); ++i) {
                    if (header[i] != want) continue;
                    if (found)
                        throw ParseError("column '" + want + "' appears more than once in header",
                                         reader.line());
                    found = i;
                }
                if (!found && explicit_binding)
                    throw ParseError("bound column '" + want + "' for field " + f +
                                         " not found in header",
                                     reader.line());
                if (found) index_[f] = *found;
            }
        } else {
            for (const auto& [field, col] : schema.columns) {
                std::size_t idx = 0;
                const auto* end = col.data() + col.size();
                if (std::from_chars(col.data(), end, idx).ptr != end)
                    throw ParseError("headerless schema needs numeric column index for " + field);
                index_[field] = idx;
                width_ = std::max(width_, idx + 1);
            }
        }
        for (const auto& [field, idx] : index_) {
            for (const auto& [other, oidx] : index_)
                if (field < other && idx == oidx)
                    throw ParseError("fields " + field + " and " + other +
                                     " bound to the same column");
        }
        headerless_ = !schema.has_header;
    }

    bool bound(const std::string& field) const { return index_.contains(field); }

    void require(std::initializer_list<const char*> required) const {
        for (const char* f : required)
            if (!bound(f)) throw ParseError(std::string("no column bound for required field ") + f);
    }

    void check_width(const std::vector<std::string>& row, std::size_t line) const {
        const bool ok = headerless_ ? row.size() >= width_ : row.size() == width_;
        if (!ok)
            throw ParseError("expected " + std::to_string(width_) + " fields, found " +
                                 std::to_string(row.size()),
                             line);
    }

    const std::string* get(const std::vector<std::string>& row, const std::string& field) const {
        const auto it = index_.find(field);
        return it == index_.end() ? nullptr : &row[it->second];
    }

private:
    std::map<std::string, std::size_t> index_;
    std::size_t width_ = 0;
    bool headerless_ = false;
};

std::string required_id(const Binding& b, const std::vector<std::string>& row, const char* field,
                        std::size_t line) {
    const std::string* v = b.get(row, field);
    const std::string_view t = v ? text::trim(*v) : std::string_view{};
    if (t.empty()) throw ParseError(std::string("missing required field ") + field, line);
    return std::string(t);
}

std::string optional_id(const Binding& b, const std::vector<std::string>& row, const char* field) {
    const std::string* v = b.get(row, field);
    return v ? std::string(text::trim(*v)) : std::string{};
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

void for_each_image(std::istream& in, const TableSchema& schema, const ImageSink& sink,
                    std::size_t record_cap) {
    DelimitedReader reader(in, schema.delimiter, record_cap);
    Binding b(reader, schema, kImageFields);
    b.require({"image_id", "patient_id", "study_id"});
    std::vector<std::string> row;
    while (reader.next(row)) {
        const std::size_t line = reader.line();
        b.check_width(row, line);
        ImageRecord r;
        r.image_id = required_id(b, row, "image_id", line);
        r.patient_id = required_id(b, row, "patient_id", line);
        r.study_id = required_id(b, row, "study_id", line);
        r.image_path = optional_id(b, row, "image_path");
        sink(std::move(r));
    }
}

void for_each_qa(std::istream& in, const TableSchema& schema, const QASink& sink,
                 std::size_t record_cap) {
    DelimitedReader reader(in, schema.delimiter, record_cap);
    Binding b(reader, schema, kQAFields);
    b.require({"image_id", "question", "answer", "category"});
    std::vector<std::string> row;
    std::size_t ordinal = 0;
    while (reader.next(row)) {
        const std::size_t line = reader.line();
        ++ordinal;
        b.check_width(row, line);
        QARecord r;
        r.qa_id = b.bound("qa_id") ? required_id(b, row, "qa_id", line) : std::to_string(ordinal);
        r.image_id = required_id(b, row, "image_id", line);
        r.patient_id = optional_id(b, row, "patient_id");
        r.question = *b.get(row, "question");
        r.answer = *b.get(row, "answer");
        if (text::trim(r.question).empty()) throw ParseError("empty question", line);
        if (text::trim(r.answer).empty()) throw ParseError("empty answer", line);
        const std::string& cat = *b.get(row, "category");
        const auto category = parse_category(cat);
        if (!category) throw ParseError("unknown category '" + cat + "'", line);
        r.category = *category;
        r.openness = classify_openness(r.answer);
        sink(std::move(r));
    }
}

namespace {

ExpertPrediction expert_from_json(const json& j, std::size_t line) {
    if (!j.is_object()) throw ParseError("expert record is not an object", line);
    ExpertPrediction e;

    const auto id = j.find("image_id");
    if (id == j.end() || !id->is_string() || text::trim(id->get<std::string>()).empty())
        throw ParseError("missing image_id", line);
    e.image_id = std::string(text::trim(id->get<std::string>()));

    const auto probs = j.find("disease_probs");
    if (probs == j.end() || !probs->is_object()) throw ParseError("missing disease_probs", line);
    for (const auto& [key, value] : probs->items())
        if (!condition_index(key)) throw ParseError("unknown condition: " + key, line);
    for (std::size_t i = 0; i < kNumConditions; ++i) {
        const std::string key(kConditions[i]);
        const auto it = probs->find(key);
        if (it == probs->end()) throw ParseError("missing condition: " + key, line);
        if (!it->is_number()) throw ParseError("non-numeric probability for " + key, line);
        const double p = it->get<double>();
        if (!(p >= 0.0 && p <= 1.0))
            throw ParseError("probability out of range [0,1] for " + key + ": " + it->dump(),
                             line);
        e.disease_probs[i] = p;
    }

    const auto age = j.find("age_years");
    if (age == j.end() || !age->is_number()) throw ParseError("missing age_years", line);
    e.age_years = age->get<double>();
    if (!(e.age_years >= 0.0) || !std::isfinite(e.age_years))
        throw ParseError("age_years out of range: " + age->dump(), line);

    const auto race = j.find("race");
    if (race == j.end() || !race->is_string()) throw ParseError("missing race", line);
    const auto r = parse_race(race->get<std::string>());
    if (!r) throw ParseError("unknown race label: " + race->get<std::string>(), line);
    e.race = *r;

    const auto view = j.find("view");
    if (view == j.end() || !view->is_string()) throw ParseError("missing view", line);
    const auto v = parse_view(view->get<std::string>());
    if (!v) throw ParseError("unknown view label: " + view->get<std::string>(), line);
    e.view = *v;
    return e;
}

json expert_to_json(const ExpertPrediction& e) {
    json probs = json::object();
    for (std::size_t i = 0; i < kNumConditions; ++i)
        probs[std::string(kConditions[i])] = e.disease_probs[i];
    return json{{"image_id", e.image_id},
                {"disease_probs", std::move(probs)},
                {"age_years", e.age_years},
                {"race", std::string(to_string(e.race))},
                {"view", std::string(to_string(e.view))}};
}

}  // namespace

void for_each_expert(std::istream& in, const ExpertSink& sink, std::size_t record_cap) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.size() > record_cap)
            throw ParseError("record exceeds buffer cap of " + std::to_string(record_cap) +
                                 " bytes",
                             lineno);
        std::string_view view = line;
        if (lineno == 1 && text::starts_with_bom(view)) view.remove_prefix(3);
        view = text::trim(view);
        if (view.empty()) continue;
        json j;
        try {
            j = json::parse(view);
        } catch (const json::parse_error& ex) {
            throw ParseError(std::string("malformed record: ") + ex.what(), lineno);
        }
        sink(expert_from_json(j, lineno));
    }
}

std::vector<ImageRecord> parse_image_metadata(std::istream& in, const TableSchema& schema) {
    std::vector<ImageRecord> out;
    for_each_image(in, schema, [&](ImageRecord&& r) { out.push_back(std::move(r)); });
    return out;
}

std::vector<QARecord> parse_qa_table(std::istream& in, const TableSchema& schema) {
    std::vector<QARecord> out;
    for_each_qa(in, schema, [&](QARecord&& r) { out.push_back(std::move(r)); });
    return out;
}

std::vector<ExpertPrediction> parse_expert_predictions(std::istream& in) {
    std::vector<ExpertPrediction> out;
    for_each_expert(in, [&](ExpertPrediction&& r) { out.push_back(std::move(r)); });
    return out;
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

void write_image_metadata(std::ostream& out, std::span<const ImageRecord> images) {
    out << "image_id,patient_id,study_id,image_path\n";
    for (const auto& r : images)
        out << csv_escape(r.image_id) << ',' << csv_escape(r.patient_id) << ','
            << csv_escape(r.study_id) << ',' << csv_escape(r.image_path) << '\n';
}

void write_qa_table(std::ostream& out, std::span<const QARecord> qas) {
    out << "qa_id,image_id,patient_id,question,answer,category\n";
    for (const auto& r : qas)
        out << csv_escape(r.qa_id) << ',' << csv_escape(r.image_id) << ','
            << csv_escape(r.patient_id) << ',' << csv_escape(r.question) << ','
            << csv_escape(r.answer) << ',' << to_string(r.category) << '\n';
}

void write_expert_predictions(std::ostream& out, std::span<const ExpertPrediction> experts) {
    for (const auto& e : experts) out << expert_to_json(e).dump() << '\n';
}

}  // namespace cxrkit::ingest
