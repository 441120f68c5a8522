#include "epicontrol/data_files.hpp"

#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include "epicontrol/csv_format.hpp"
#include "epicontrol/error.hpp"

namespace epicontrol {

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write file " + path.string());
    out << content;
    if (!out) throw Error("write failed for " + path.string());
}

namespace {

std::string strip_comment(const std::string& line) {
    const auto pos = line.find('#');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

double parse_number(const std::string& token, int line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("line " + std::to_string(line_no) + ": not a number: '" + token + "'");
    }
}

}  // namespace

ContactMatrixSet parse_contact_matrices(const std::string& text) {
    std::map<std::string, std::vector<std::vector<double>>> blocks;
    std::string current;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::istringstream fields(strip_comment(raw));
        std::string token;
        std::vector<double> row;
        while (fields >> token) {
            if (token.front() == '[') {
                if (token.back() != ']' || !row.empty()) {
                    throw StructuralError("line " + std::to_string(line_no) + ": malformed block header");
                }
                current = token.substr(1, token.size() - 2);
                if (current != "home" && current != "work" && current != "school" && current != "other") {
                    throw StructuralError("line " + std::to_string(line_no) + ": unknown block '" + current + "'");
                }
                if (blocks.count(current)) throw StructuralError("duplicate block '" + current + "'");
                blocks[current];
                continue;
            }
            row.push_back(parse_number(token, line_no));
        }
        if (row.empty()) continue;
        if (current.empty()) throw StructuralError("line " + std::to_string(line_no) + ": numbers before any block");
        if (row.size() != kAgeGroups) {
            throw StructuralError("line " + std::to_string(line_no) + ": expected 5 columns, got " +
                                  std::to_string(row.size()));
        }
        blocks[current].push_back(std::move(row));
    }

    ContactMatrixSet set;
    const std::array<std::pair<const char*, ContactMatrix*>, 4> targets{
        {{"home", &set.home}, {"work", &set.work}, {"school", &set.school}, {"other", &set.other}}};
    for (const auto& [name, matrix] : targets) {
        const auto it = blocks.find(name);
        if (it == blocks.end()) throw StructuralError(std::string("missing block '") + name + "'");
        if (it->second.size() != kAgeGroups) {
            throw StructuralError(std::string("block '") + name + "' must have 5 rows, has " +
                                  std::to_string(it->second.size()));
        }
        for (std::size_t i = 0; i < kAgeGroups; ++i) {
            for (std::size_t j = 0; j < kAgeGroups; ++j) {
                (*matrix)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = it->second[i][j];
            }
        }
    }
    set.validate();
    return set;
}

ContactMatrixSet load_contact_matrices(const std::filesystem::path& path) {
    try {
        return parse_contact_matrices(read_text_file(path));
    } catch (const StructuralError& e) {
        throw StructuralError(path.string() + ": " + e.what());
    }
}

std::string format_contact_matrices(const ContactMatrixSet& set) {
    std::ostringstream out;
    out << "# contact matrices v1: rows = respondent age group, columns = contact age group\n";
    out << "# age groups: 0-19 20-39 40-59 60-79 80+\n";
    const std::array<std::pair<const char*, const ContactMatrix*>, 4> blocks{
        {{"home", &set.home}, {"work", &set.work}, {"school", &set.school}, {"other", &set.other}}};
    for (const auto& [name, m] : blocks) {
        out << '[' << name << "]\n";
        for (Eigen::Index i = 0; i < 5; ++i) {
            for (Eigen::Index j = 0; j < 5; ++j) out << (j ? " " : "") << format_number((*m)(i, j));
            out << '\n';
        }
    }
    return out.str();
}

PopulationCensus parse_census(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    std::vector<double> values;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::istringstream fields(strip_comment(raw));
        std::string token;
        while (fields >> token) values.push_back(parse_number(token, line_no));
    }
    if (values.size() != kAgeGroups) {
        throw StructuralError("census must list exactly 5 values, found " + std::to_string(values.size()));
    }
    PopulationCensus census;
    std::copy(values.begin(), values.end(), census.population.begin());
    census.validate();
    return census;
}

PopulationCensus load_census(const std::filesystem::path& path) {
    try {
        return parse_census(read_text_file(path));
    } catch (const StructuralError& e) {
        throw StructuralError(path.string() + ": " + e.what());
    }
}

std::string format_census(const PopulationCensus& census) {
    std::ostringstream out;
    out << "# census v1: population per age group 0-19 20-39 40-59 60-79 80+\n";
    for (double v : census.population) out << format_number(v) << '\n';
    return out.str();
}

}  // namespace epicontrol
