#pragma once

#include <memory>
#include <string>

#include "agent0/sandbox.hpp"

namespace agent0 {

// Wire protocol: POST {endpoint_path} with {"request_id", "code", "timeout_ms"},
// response {"status", "output", "elapsed_ms"}.
struct HttpWorkerConfig {
    std::string host = "127.0.0.1";
    int port = 0;
    std::string endpoint_path = "/execute";
    int connect_timeout_ms = 2000;
};

class HttpWorker final : public Worker {
  public:
    explicit HttpWorker(HttpWorkerConfig cfg) : cfg_(std::move(cfg)) {}
    ExecutionResult execute(const ExecutionRequest& req) override;
    std::string describe() const override;

  private:
    HttpWorkerConfig cfg_;
};

// Serves a local Worker over the same wire protocol; the in-process adapter
// for desk-scale runs and tests.
class WorkerHttpServer {
  public:
    WorkerHttpServer(std::unique_ptr<Worker> backend, const std::string& host = "127.0.0.1",
                     int port = 0, const std::string& endpoint_path = "/execute");
    ~WorkerHttpServer();

    int port() const { return port_; }
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace agent0
