#pragma once

// Asynchronous job service: a FIFO queue drained by a fixed set of job slots, job records
// persisted in a JSON index next to the artifact store.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "epicontrol/artifact_store.hpp"
#include "epicontrol/pipeline.hpp"

namespace epicontrol {

enum class JobStatus { Queued, Running, Done, Failed };
std::string to_string(JobStatus status);
JobStatus job_status_from_string(const std::string& name);

struct ArtifactLink {
    std::string name;
    std::string ref;
    std::string kind;
    std::string media_type;
};

struct JobRecord {
    std::string id;
    JobKind kind = JobKind::Calibrate;
    JobStatus status = JobStatus::Queued;
    double progress = 0.0;
    nlohmann::json progress_detail = nlohmann::json::object();
    nlohmann::json config = nlohmann::json::object();
    std::vector<ArtifactLink> artifacts;
    std::string error;
    /// Non-fatal note on a finished job (e.g. acceptance-floor warning).
    std::string message;
    bool cancelled = false;
    std::string created_at;
    std::string started_at;
    std::string finished_at;

    bool finished() const { return status == JobStatus::Done || status == JobStatus::Failed; }
};

nlohmann::json job_to_json(const JobRecord& record);
JobRecord job_from_json(const nlohmann::json& j);

struct JobServiceConfig {
    std::filesystem::path state_dir = "epicontrol-state";
    /// Root for relative dataset / calibration paths in job configs.
    std::filesystem::path data_dir = ".";
    /// Total worker threads (0 = logical cores), split evenly across the job slots.
    int workers = 0;
    /// Jobs executed concurrently.
    int job_slots = 1;
    /// Seed used when a config omits "seed".
    std::uint64_t default_seed = 0;
};

class JobService {
public:
    /// Loads the index; jobs left queued or running by a previous process are marked failed.
    explicit JobService(JobServiceConfig config);
    ~JobService();
    JobService(const JobService&) = delete;
    JobService& operator=(const JobService&) = delete;

    /// Validates and queues. Throws FieldError on schema violations.
    JobRecord submit(const std::string& kind, const nlohmann::json& config);
    /// Throws NotFoundError.
    JobRecord get(const std::string& id) const;
    std::vector<JobRecord> list() const;
    /// Queued jobs fail immediately; running jobs stop at the next generation/day boundary.
    /// Throws NotFoundError or ConflictError (already finished).
    JobRecord cancel(const std::string& id);

    /// Blocks until the job finishes or the timeout expires; returns the latest snapshot.
    JobRecord wait(const std::string& id, std::chrono::milliseconds timeout) const;

    ArtifactStore& store() { return store_; }
    const JobServiceConfig& config() const { return config_; }
    /// Stops the workers after their current job; queued jobs stay queued in the index.
    void shutdown();

private:
    void worker_loop();
    void execute(const std::string& id);
    void persist_locked() const;
    JobRecord& record_locked(const std::string& id);
    const JobRecord& record_locked(const std::string& id) const;

    JobServiceConfig config_;
    ArtifactStore store_;
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::condition_variable work_available_;
    std::map<std::string, JobRecord> jobs_;
    std::map<std::string, bool> cancel_requested_;
    std::deque<std::string> queue_;
    std::vector<std::thread> workers_;
    bool stopping_ = false;
    std::uint64_t counter_ = 0;
};

}  // namespace epicontrol
