#pragma once

// HTTP/JSON front of the job service. Routes (all under /v1):
//   GET    /v1/health
//   POST   /v1/jobs            {"kind": ..., "config": {...}}  -> 201 job record
//   GET    /v1/jobs            -> {"jobs": [...]}
//   GET    /v1/jobs/{id}       -> job record
//   DELETE /v1/jobs/{id}       -> cancelled job record (409 when already finished)
//   GET    /v1/artifacts/{ref} -> artifact bytes with their media type
// Errors are JSON objects {"error": message, "field": path?} with 400/404/409/422/500.

#include <memory>
#include <string>

#include "epicontrol/jobs.hpp"

namespace httplib {
class Server;
}

namespace epicontrol {

class HttpApi {
public:
    explicit HttpApi(JobService& service);
    ~HttpApi();

    /// Blocks serving requests until stop() is called.
    bool listen(const std::string& host, int port);
    /// Binds an ephemeral port and returns it; pair with listen_after_bind() on another thread.
    int bind_any_port(const std::string& host);
    bool listen_after_bind();
    void stop();
    bool running() const;
    void wait_until_ready() const;

private:
    void install_routes();
    JobService& service_;
    std::unique_ptr<httplib::Server> server_;
};

inline constexpr const char* kApiVersion = "v1";

}  // namespace epicontrol
