#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace epicontrol {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Verifies every "<digest>  <relative path>" line of a sha256sum-style manifest.
/// Throws ValidationError naming the first mismatching file.
void verify_checksum_manifest(const std::filesystem::path& manifest);

}  // namespace epicontrol
