#include "epicontrol/http_api.hpp"

#include <httplib.h>

#include "epicontrol/error.hpp"

namespace epicontrol {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(1) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
    json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    send_json(res, status, body);
}

// Maps library errors onto HTTP status codes.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const FieldError& e) {
        send_error(res, 422, e.what(), e.field());
    } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
        send_error(res, 409, e.what());
    } catch (const ValidationError& e) {
        send_error(res, 422, e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

}  // namespace

HttpApi::HttpApi(JobService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

HttpApi::~HttpApi() { stop(); }

void HttpApi::install_routes() {
    auto& s = *server_;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
    s.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json counts{{"queued", 0}, {"running", 0}, {"done", 0}, {"failed", 0}};
            for (const auto& r : service_.list()) counts[to_string(r.status)] = counts[to_string(r.status)].get<int>() + 1;
            send_json(res, 200, {{"status", "ok"}, {"api", kApiVersion}, {"jobs", counts}});
        });
    });

    s.Post("/v1/jobs", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object()) {
                send_error(res, 400, "request body must be a JSON object");
                return;
            }
            if (!body.contains("kind") || !body.at("kind").is_string()) {
                throw FieldError("kind", "is required and must be a string");
            }
            const json config = body.value("config", json::object());
            const JobRecord r = service_.submit(body.at("kind").get<std::string>(), config);
            res.set_header("Location", "/v1/jobs/" + r.id);
            send_json(res, 201, job_to_json(r));
        });
    });

    s.Get("/v1/jobs", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json arr = json::array();
            for (const auto& r : service_.list()) arr.push_back(job_to_json(r));
            send_json(res, 200, {{"jobs", arr}});
        });
    });

    s.Get(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, job_to_json(service_.get(req.matches[1]))); });
    });

    s.Delete(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, job_to_json(service_.cancel(req.matches[1]))); });
    });

    s.Get(R"(/v1/artifacts/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string ref = req.matches[1];
            const ArtifactInfo info = service_.store().info(ref);
            res.status = 200;
            res.set_header("ETag", "\"" + ref + "\"");
            res.set_header("Cache-Control", "public, max-age=31536000, immutable");
            res.set_content(service_.store().get(ref), info.media_type);
        });
    });

    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "no such route" : "request failed");
    });
}

bool HttpApi::listen(const std::string& host, int port) { return server_->listen(host, port); }

int HttpApi::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool HttpApi::listen_after_bind() { return server_->listen_after_bind(); }

void HttpApi::stop() {
    if (server_) server_->stop();
}

bool HttpApi::running() const { return server_->is_running(); }

void HttpApi::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace epicontrol
