#include "epicontrol/artifact_store.hpp"

#include <fstream>

#include <json.hpp>

#include "epicontrol/checksum.hpp"
#include "epicontrol/data_files.hpp"
#include "epicontrol/error.hpp"

namespace epicontrol {

namespace {

// Write to a temporary name and rename, so a crash never leaves a truncated blob behind.
void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

ArtifactStore::ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_ / "objects");
}

bool ArtifactStore::is_ref(const std::string& text) {
    if (text.size() != 64) return false;
    for (char c : text) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    }
    return true;
}

std::filesystem::path ArtifactStore::blob_path(const std::string& ref) const { return root_ / "objects" / ref; }

ArtifactInfo ArtifactStore::put(const std::string& content, const std::string& kind, const std::string& media_type) {
    ArtifactInfo info{sha256_hex(content), kind, media_type, content.size()};
    std::lock_guard lock(write_mutex_);
    const auto blob = blob_path(info.ref);
    if (std::filesystem::exists(blob)) return this->info(info.ref);
    nlohmann::json meta{{"ref", info.ref}, {"kind", kind}, {"media_type", media_type}, {"size", info.size}};
    auto meta_path = blob;
    meta_path += ".json";
    write_atomic(meta_path, meta.dump(1) + "\n");
    write_atomic(blob, content);
    return info;
}

bool ArtifactStore::exists(const std::string& ref) const {
    return is_ref(ref) && std::filesystem::is_regular_file(blob_path(ref));
}

std::string ArtifactStore::get(const std::string& ref) const {
    if (!exists(ref)) throw NotFoundError("artifact '" + ref + "' not found");
    return read_text_file(blob_path(ref));
}

ArtifactInfo ArtifactStore::info(const std::string& ref) const {
    if (!exists(ref)) throw NotFoundError("artifact '" + ref + "' not found");
    auto meta_path = blob_path(ref);
    meta_path += ".json";
    ArtifactInfo info{ref, "unknown", "application/octet-stream", std::filesystem::file_size(blob_path(ref))};
    if (std::filesystem::exists(meta_path)) {
        const auto meta = nlohmann::json::parse(read_text_file(meta_path), nullptr, false);
        if (meta.is_object()) {
            info.kind = meta.value("kind", info.kind);
            info.media_type = meta.value("media_type", info.media_type);
        }
    }
    return info;
}

}  // namespace epicontrol
