#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cxrkit/corpus.hpp"

namespace cxrkit::ingest {

// Column bindings for one delimiter-separated source. Keys are logical field names,
// values are header column names (or 0-based column indices when has_header is false).
// Fields left unbound fall back to a header column of the same name.
struct TableSchema {
    char delimiter = ',';
    bool has_header = true;
    std::map<std::string, std::string> columns;
};

struct SchemaConfig {
    TableSchema images;
    TableSchema qas;
};

// Logical fields per source.
inline constexpr const char* kImageFields[] = {"image_id", "patient_id", "study_id", "image_path"};
inline constexpr const char* kQAFields[] = {"qa_id",    "image_id", "patient_id",
                                            "question", "answer",   "category"};

inline constexpr std::size_t kDefaultRecordCap = std::size_t{1} << 20;

// Streaming RFC-4180-style reader: double-quote wrapping, doubled quotes inside quoted
// fields, CRLF or LF line endings, leading UTF-8 BOM skipped. Holds at most one record.
class DelimitedReader {
public:
    DelimitedReader(std::istream& in, char delimiter, std::size_t record_cap = kDefaultRecordCap);

    // Reads the next record. Returns false at end of input. Blank lines are skipped.
    bool next(std::vector<std::string>& fields);

    // Physical line on which the last returned record started (1-based).
    std::size_t line() const { return record_line_; }

private:
    int get();
    int peek();

    std::istream& in_;
    char delim_;
    std::size_t cap_;
    std::size_t line_ = 1;
    std::size_t record_line_ = 0;
    bool bom_checked_ = false;
};

using ImageSink = std::function<void(ImageRecord&&)>;
using QASink = std::function<void(QARecord&&)>;
using ExpertSink = std::function<void(ExpertPrediction&&)>;

void for_each_image(std::istream& in, const TableSchema& schema, const ImageSink& sink,
                    std::size_t record_cap = kDefaultRecordCap);
void for_each_qa(std::istream& in, const TableSchema& schema, const QASink& sink,
                 std::size_t record_cap = kDefaultRecordCap);
void for_each_expert(std::istream& in, const ExpertSink& sink,
                     std::size_t record_cap = kDefaultRecordCap);

std::vector<ImageRecord> parse_image_metadata(std::istream& in, const TableSchema& schema = {});
std::vector<QARecord> parse_qa_table(std::istream& in, const TableSchema& schema = {});
std::vector<ExpertPrediction> parse_expert_predictions(std::istream& in);

// Writers emit the default schema (header row, comma delimiter) and JSON lines respectively.
void write_image_metadata(std::ostream& out, std::span<const ImageRecord> images);
void write_qa_table(std::ostream& out, std::span<const QARecord> qas);
void write_expert_predictions(std::ostream& out, std::span<const ExpertPrediction> experts);

std::string csv_escape(const std::string& field, char delimiter = ',');

}  // namespace cxrkit::ingest
