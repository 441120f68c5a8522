#pragma once

// Content-addressed artifact store: every artifact is an immutable blob named by the
// SHA-256 of its bytes, with a small JSON sidecar describing it.

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

namespace epicontrol {

struct ArtifactInfo {
    std::string ref;
    std::string kind;        ///< e.g. "posterior-ensemble", "optimization", "schedule-csv"
    std::string media_type;  ///< HTTP content type
    std::size_t size = 0;
};

class ArtifactStore {
public:
    explicit ArtifactStore(std::filesystem::path root);

    /// Stores `content` and returns its ref. Storing identical bytes again is a no-op.
    ArtifactInfo put(const std::string& content, const std::string& kind, const std::string& media_type);
    /// Throws NotFoundError for unknown or malformed refs.
    std::string get(const std::string& ref) const;
    ArtifactInfo info(const std::string& ref) const;
    bool exists(const std::string& ref) const;

    const std::filesystem::path& root() const { return root_; }

    /// 64 lowercase hex characters.
    static bool is_ref(const std::string& text);

private:
    std::filesystem::path blob_path(const std::string& ref) const;
    std::filesystem::path root_;
    std::mutex write_mutex_;
};

}  // namespace epicontrol
