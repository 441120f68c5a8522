#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace epicontrol {

/// Fixed 12-significant-digit rendering used by every CSV the toolkit writes.
std::string format_number(double value);

/// Splits one CSV line. Handles double-quoted fields with embedded commas and "" escapes.
std::vector<std::string> split_csv_line(std::string_view line);

/// Minimal row writer: joins fields with commas and terminates with '\n'.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(const std::vector<std::string>& fields);
    void add_numeric_row(const std::vector<double>& fields);
    const std::string& str() const { return out_; }

private:
    std::size_t columns_;
    std::string out_;
};

}  // namespace epicontrol
