#include "epicontrol/csv_format.hpp"

#include <cmath>
#include <cstdio>

#include "epicontrol/error.hpp"

namespace epicontrol {

std::string format_number(double value) {
    if (value == 0.0) return "0";  // folds -0
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    if (quoted) throw ValidationError("unterminated quoted field");
    fields.push_back(std::move(field));
    return fields;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) { add_row(header); }

void CsvWriter::add_row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw StructuralError("CSV row has wrong number of fields");
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_.push_back(',');
        out_ += fields[i];
    }
    out_.push_back('\n');
}

void CsvWriter::add_numeric_row(const std::vector<double>& fields) {
    std::vector<std::string> text;
    text.reserve(fields.size());
    for (double v : fields) text.push_back(format_number(v));
    add_row(text);
}

}  // namespace epicontrol
