#include "epicontrol/checksum.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>
#include <sstream>

#include "epicontrol/data_files.hpp"
#include "epicontrol/error.hpp"

namespace epicontrol {

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

void verify_checksum_manifest(const std::filesystem::path& manifest) {
    std::istringstream in(read_text_file(manifest));
    const auto root = manifest.parent_path();
    std::string line;
    int checked = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string digest, file;
        fields >> digest >> file;
        if (digest.size() != 64 || file.empty()) throw ValidationError("malformed checksum line: " + line);
        if (sha256_file(root / file) != digest) throw ValidationError("checksum mismatch for " + file);
        ++checked;
    }
    if (checked == 0) throw ValidationError("checksum manifest lists no files: " + manifest.string());
}

}  // namespace epicontrol
