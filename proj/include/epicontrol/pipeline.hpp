#pragma once

// Job kinds shared by the job service and the CLI: config schemas, validation and
// execution. A job turns a JSON config into a list of named outputs.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "epicontrol/abc.hpp"
#include "epicontrol/control.hpp"
#include "epicontrol/dataset.hpp"

namespace epicontrol {

class ArtifactStore;

enum class JobKind { Ingest, Calibrate, Simulate, Optimize, Nmpc, DynamicUpdate };

std::string to_string(JobKind kind);
/// Throws FieldError("kind", ...) for unknown kinds.
JobKind job_kind_from_string(const std::string& name);

struct JobOutput {
    std::string name;        ///< logical name, e.g. "ensemble", "schedule"
    std::string filename;    ///< file name used by the CLI
    std::string kind;        ///< artifact kind
    std::string media_type;  ///< HTTP content type
    std::string content;
};

struct JobContext {
    /// Root for relative paths in configs.
    std::filesystem::path data_dir = ".";
    /// When set, "dataset" / "calibration" fields may also be artifact refs.
    const ArtifactStore* store = nullptr;
    int workers = 0;
    /// Fraction in [0, 1] and a kind-specific detail object.
    std::function<void(double, const nlohmann::json&)> progress;
    std::function<bool()> cancelled;
};

/// Outcome of a run. `cancelled` runs may still carry partial outputs.
struct JobResult {
    std::vector<JobOutput> outputs;
    bool cancelled = false;
    std::string message;
};

/// Checks field names, types, ranges and that referenced datasets/calibrations resolve.
/// Throws FieldError with a "config.<field>" path.
void validate_job_config(JobKind kind, const nlohmann::json& config, const JobContext& context);

JobResult run_job(JobKind kind, const nlohmann::json& config, const JobContext& context);

/// Resolves a "dataset" reference: artifact ref (bundle) or dataset directory.
Dataset resolve_dataset(const std::string& reference, const JobContext& context);
CalibrationArtifact resolve_calibration(const std::string& reference, const JobContext& context);

/// Table of posterior means and standard deviations, one parameter per row.
std::string format_posterior_table(const PosteriorEnsemble& ensemble);

}  // namespace epicontrol
