#include "agent0/sandbox_http.hpp"

#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "agent0/common.hpp"

namespace agent0 {

using nlohmann::json;

namespace {

std::optional<ExecStatus> status_from_name(std::string_view name) {
    if (name == "ok") return ExecStatus::ok;
    if (name == "error") return ExecStatus::error;
    if (name == "timeout") return ExecStatus::timeout;
    if (name == "transport_failure") return ExecStatus::transport_failure;
    return std::nullopt;
}

}  // namespace

ExecutionResult HttpWorker::execute(const ExecutionRequest& req) {
    httplib::Client cli(cfg_.host, cfg_.port);
    cli.set_connection_timeout(0, cfg_.connect_timeout_ms * 1000);
    // read timeout covers the sandbox execution itself
    int read_ms = req.timeout_ms + cfg_.connect_timeout_ms;
    cli.set_read_timeout(read_ms / 1000, (read_ms % 1000) * 1000);

    json body{{"request_id", req.request_id}, {"code", req.code}, {"timeout_ms", req.timeout_ms}};
    auto res = cli.Post(cfg_.endpoint_path, body.dump(), "application/json");
    if (!res)
        return {ExecStatus::transport_failure,
                "http transport: " + httplib::to_string(res.error()), 0, -1};
    if (res->status != 200)
        return {ExecStatus::transport_failure, "http status " + std::to_string(res->status), 0,
                -1};
    try {
        json j = json::parse(res->body);
        auto status = status_from_name(j.at("status").get<std::string>());
        if (!status)
            return {ExecStatus::transport_failure, "bad status field in worker response", 0, -1};
        return {*status, j.at("output").get<std::string>(), j.at("elapsed_ms").get<long>(), -1};
    } catch (const json::exception& e) {
        return {ExecStatus::transport_failure, std::string("bad worker response: ") + e.what(), 0,
                -1};
    }
}

std::string HttpWorker::describe() const {
    return "http://" + cfg_.host + ":" + std::to_string(cfg_.port) + cfg_.endpoint_path;
}

struct WorkerHttpServer::Impl {
    std::unique_ptr<Worker> backend;
    httplib::Server server;
    std::thread thread;
};

WorkerHttpServer::WorkerHttpServer(std::unique_ptr<Worker> backend, const std::string& host,
                                   int port, const std::string& endpoint_path)
    : impl_(std::make_unique<Impl>()) {
    impl_->backend = std::move(backend);
    Worker* w = impl_->backend.get();
    impl_->server.Post(endpoint_path, [w](const httplib::Request& req, httplib::Response& res) {
        try {
            json j = json::parse(req.body);
            ExecutionRequest er{j.at("request_id").get<std::string>(),
                                j.at("code").get<std::string>(), j.at("timeout_ms").get<int>()};
            ExecutionResult r = w->execute(er);
            json out{{"status", std::string(exec_status_name(r.status))},
                     {"output", r.output},
                     {"elapsed_ms", r.elapsed_ms}};
            res.set_content(out.dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(std::string("bad request: ") + e.what(), "text/plain");
        }
    });
    port_ = port == 0 ? impl_->server.bind_to_any_port(host)
                      : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) throw IoError("worker http server: cannot bind " + host);
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void WorkerHttpServer::stop() {
    if (impl_ && impl_->server.is_running()) {
        impl_->server.stop();
    }
    if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

WorkerHttpServer::~WorkerHttpServer() {
    stop();
}

}  // namespace agent0
