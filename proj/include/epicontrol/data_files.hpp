#pragma once

// Plain-text loaders for the versioned model input files.
//
// Contact matrix file: '#' comments, then four blocks introduced by
// "[home]", "[work]", "[school]", "[other]" (any order, each exactly once),
// each followed by 5 rows of 5 whitespace-separated non-negative numbers,
// row i = respondent age group i, column j = contact age group j.
//
// Census file: '#' comments, then exactly 5 positive numbers (one per age
// group, youngest first), whitespace- or newline-separated.

#include <filesystem>
#include <string>

#include "epicontrol/seird.hpp"

namespace epicontrol {

ContactMatrixSet parse_contact_matrices(const std::string& text);
ContactMatrixSet load_contact_matrices(const std::filesystem::path& path);
std::string format_contact_matrices(const ContactMatrixSet& set);

PopulationCensus parse_census(const std::string& text);
PopulationCensus load_census(const std::filesystem::path& path);
std::string format_census(const PopulationCensus& census);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace epicontrol
