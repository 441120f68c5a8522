#include "epicontrol/jobs.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <random>

#include "epicontrol/data_files.hpp"
#include "epicontrol/error.hpp"
#include "epicontrol/parallel.hpp"

namespace epicontrol {

using nlohmann::json;

std::string to_string(JobStatus status) {
    switch (status) {
        case JobStatus::Queued: return "queued";
        case JobStatus::Running: return "running";
        case JobStatus::Done: return "done";
        case JobStatus::Failed: return "failed";
    }
    return "queued";
}

JobStatus job_status_from_string(const std::string& name) {
    for (auto s : {JobStatus::Queued, JobStatus::Running, JobStatus::Done, JobStatus::Failed}) {
        if (to_string(s) == name) return s;
    }
    throw ValidationError("unknown job status '" + name + "'");
}

json job_to_json(const JobRecord& r) {
    json artifacts = json::array();
    for (const auto& a : r.artifacts) {
        artifacts.push_back({{"name", a.name}, {"ref", a.ref}, {"kind", a.kind}, {"media_type", a.media_type}});
    }
    return json{{"id", r.id},
                {"kind", to_string(r.kind)},
                {"status", to_string(r.status)},
                {"progress", r.progress},
                {"progress_detail", r.progress_detail},
                {"config", r.config},
                {"artifacts", artifacts},
                {"error", r.error},
                {"message", r.message},
                {"cancelled", r.cancelled},
                {"created_at", r.created_at},
                {"started_at", r.started_at},
                {"finished_at", r.finished_at}};
}

JobRecord job_from_json(const json& j) {
    JobRecord r;
    r.id = j.at("id").get<std::string>();
    r.kind = job_kind_from_string(j.at("kind").get<std::string>());
    r.status = job_status_from_string(j.at("status").get<std::string>());
    r.progress = j.value("progress", 0.0);
    r.progress_detail = j.value("progress_detail", json::object());
    r.config = j.value("config", json::object());
    for (const auto& a : j.value("artifacts", json::array())) {
        r.artifacts.push_back({a.at("name").get<std::string>(), a.at("ref").get<std::string>(),
                               a.value("kind", std::string()), a.value("media_type", std::string())});
    }
    r.error = j.value("error", std::string());
    r.message = j.value("message", std::string());
    r.cancelled = j.value("cancelled", false);
    r.created_at = j.value("created_at", std::string());
    r.started_at = j.value("started_at", std::string());
    r.finished_at = j.value("finished_at", std::string());
    return r;
}

namespace {

std::string now_iso() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string random_token() {
    std::random_device rd;
    const std::uint64_t a = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(a));
    return buf;
}

bool accepts_seed(JobKind kind) { return kind != JobKind::Ingest; }

}  // namespace

JobService::JobService(JobServiceConfig config) : config_(std::move(config)), store_(config_.state_dir / "artifacts") {
    if (config_.job_slots < 1) throw ValidationError("job slots must be >= 1");
    const auto index = config_.state_dir / "jobs.json";
    if (std::filesystem::exists(index)) {
        const json j = json::parse(read_text_file(index));
        for (const auto& item : j.at("jobs")) {
            JobRecord r = job_from_json(item);
            if (!r.finished()) {
                r.status = JobStatus::Failed;
                r.error = "interrupted by a service restart";
                r.finished_at = now_iso();
            }
            jobs_[r.id] = std::move(r);
        }
        counter_ = j.value("counter", std::uint64_t{0});
        std::lock_guard lock(mutex_);
        persist_locked();
    }
    for (int i = 0; i < config_.job_slots; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobService::~JobService() { shutdown(); }

void JobService::shutdown() {
    {
        std::lock_guard lock(mutex_);
        if (stopping_) return;
        stopping_ = true;
        for (auto& [id, flag] : cancel_requested_) flag = true;
    }
    work_available_.notify_all();
    for (auto& t : workers_) {
        if (t.joinable()) t.join();
    }
}

void JobService::persist_locked() const {
    json arr = json::array();
    for (const auto& [id, r] : jobs_) arr.push_back(job_to_json(r));
    const json j{{"schema_version", 1}, {"counter", counter_}, {"jobs", arr}};
    const auto index = config_.state_dir / "jobs.json";
    auto tmp = index;
    tmp += ".tmp";
    write_text_file(tmp, j.dump(1) + "\n");
    std::filesystem::rename(tmp, index);
}

JobRecord& JobService::record_locked(const std::string& id) {
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) throw NotFoundError("job '" + id + "' not found");
    return it->second;
}

const JobRecord& JobService::record_locked(const std::string& id) const {
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) throw NotFoundError("job '" + id + "' not found");
    return it->second;
}

JobRecord JobService::submit(const std::string& kind_name, const json& config) {
    const JobKind kind = job_kind_from_string(kind_name);
    json cfg = config.is_null() ? json::object() : config;
    if (cfg.is_object() && accepts_seed(kind) && !cfg.contains("seed")) cfg["seed"] = config_.default_seed;
    JobContext ctx;
    ctx.data_dir = config_.data_dir;
    ctx.store = &store_;
    validate_job_config(kind, cfg, ctx);

    std::lock_guard lock(mutex_);
    JobRecord r;
    r.id = std::to_string(++counter_) + "-" + random_token();
    r.kind = kind;
    r.config = cfg;
    r.created_at = now_iso();
    jobs_[r.id] = r;
    cancel_requested_[r.id] = false;
    queue_.push_back(r.id);
    persist_locked();
    work_available_.notify_one();
    changed_.notify_all();
    return r;
}

JobRecord JobService::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return record_locked(id);
}

std::vector<JobRecord> JobService::list() const {
    std::lock_guard lock(mutex_);
    std::vector<JobRecord> out;
    for (const auto& [id, r] : jobs_) out.push_back(r);
    return out;
}

JobRecord JobService::cancel(const std::string& id) {
    std::lock_guard lock(mutex_);
    JobRecord& r = record_locked(id);
    if (r.finished()) throw ConflictError("job '" + id + "' has already finished (" + to_string(r.status) + ")");
    cancel_requested_[id] = true;
    if (r.status == JobStatus::Queued) {
        queue_.erase(std::remove(queue_.begin(), queue_.end(), id), queue_.end());
        r.status = JobStatus::Failed;
        r.cancelled = true;
        r.error = "cancelled before start";
        r.finished_at = now_iso();
    }
    persist_locked();
    changed_.notify_all();
    return r;
}

JobRecord JobService::wait(const std::string& id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    changed_.wait_for(lock, timeout, [&] { return record_locked(id).finished(); });
    return record_locked(id);
}

void JobService::worker_loop() {
    for (;;) {
        std::string id;
        {
            std::unique_lock lock(mutex_);
            work_available_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            id = queue_.front();
            queue_.pop_front();
            JobRecord& r = record_locked(id);
            r.status = JobStatus::Running;
            r.started_at = now_iso();
            persist_locked();
            changed_.notify_all();
        }
        execute(id);
    }
}

void JobService::execute(const std::string& id) {
    JobKind kind;
    json config;
    {
        std::lock_guard lock(mutex_);
        const JobRecord& r = record_locked(id);
        kind = r.kind;
        config = r.config;
    }
    JobContext ctx;
    ctx.data_dir = config_.data_dir;
    ctx.store = &store_;
    const int total = config_.workers > 0 ? config_.workers : default_worker_count();
    ctx.workers = std::max(1, total / config_.job_slots);
    ctx.progress = [this, id](double fraction, const json& detail) {
        std::lock_guard lock(mutex_);
        JobRecord& r = record_locked(id);
        r.progress = std::max(r.progress, std::clamp(fraction, 0.0, 1.0));
        r.progress_detail = detail;
        persist_locked();
        changed_.notify_all();
    };
    ctx.cancelled = [this, id] {
        std::lock_guard lock(mutex_);
        return cancel_requested_[id];
    };

    JobResult result;
    std::string error;
    try {
        result = run_job(kind, config, ctx);
    } catch (const std::exception& e) {
        error = e.what();
    }

    std::vector<ArtifactLink> links;
    if (error.empty()) {
        try {
            for (const auto& o : result.outputs) {
                const ArtifactInfo info = store_.put(o.content, o.kind, o.media_type);
                links.push_back({o.name, info.ref, o.kind, o.media_type});
            }
        } catch (const std::exception& e) {
            error = std::string("artifact store: ") + e.what();
        }
    }

    std::lock_guard lock(mutex_);
    JobRecord& r = record_locked(id);
    r.artifacts = std::move(links);
    r.finished_at = now_iso();
    if (!error.empty()) {
        r.status = JobStatus::Failed;
        r.error = error;
    } else if (result.cancelled || cancel_requested_[id]) {
        r.status = JobStatus::Failed;
        r.cancelled = true;
        r.error = result.message.empty() ? "cancelled" : result.message;
    } else {
        r.status = JobStatus::Done;
        r.progress = 1.0;
        r.message = result.message;
    }
    persist_locked();
    changed_.notify_all();
}

}  // namespace epicontrol
