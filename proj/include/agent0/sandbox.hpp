#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace agent0 {

struct ExecutionRequest {
    std::string request_id;
    std::string code;       // non-empty
    int timeout_ms = 2000;  // positive
};

enum class ExecStatus { ok, error, timeout, transport_failure };

std::string_view exec_status_name(ExecStatus s);

struct ExecutionResult {
    ExecStatus status = ExecStatus::error;
    std::string output;  // stdout on ok, diagnostic otherwise
    long elapsed_ms = 0;
    int worker_id = -1;
};

// A single code-execution backend. Implementations must be safe for
// concurrent execute() calls.
class Worker {
  public:
    virtual ~Worker() = default;
    virtual ExecutionResult execute(const ExecutionRequest& req) = 0;
    virtual std::string describe() const = 0;
};

// Deterministic in-process interpreter for a small arithmetic language:
// assignment lines `name = expr`, `print(expr)` statements, exact rational
// arithmetic with + - * / and parentheses.
ExecutionResult execute_mock(const ExecutionRequest& req);

class MockWorker final : public Worker {
  public:
    ExecutionResult execute(const ExecutionRequest& req) override { return execute_mock(req); }
    std::string describe() const override { return "mock"; }
};

struct SubprocessConfig {
    // argv template; "{file}" expands to a temp file holding the code. With
    // no "{file}" placeholder the code is piped to stdin.
    std::vector<std::string> argv;
    size_t output_cap_bytes = 8192;
    std::string truncation_marker = "...[truncated]";
    int kill_grace_ms = 200;
};

ExecutionResult execute_subprocess(const ExecutionRequest& req, const SubprocessConfig& cfg);

class SubprocessWorker final : public Worker {
  public:
    explicit SubprocessWorker(SubprocessConfig cfg) : cfg_(std::move(cfg)) {}
    ExecutionResult execute(const ExecutionRequest& req) override {
        return execute_subprocess(req, cfg_);
    }
    std::string describe() const override { return "subprocess"; }

  private:
    SubprocessConfig cfg_;
};

// Sandbox interface the rollout engine depends on. Never throws across the
// boundary; failures come back as transport_failure results.
class SandboxClient {
  public:
    virtual ~SandboxClient() = default;
    virtual ExecutionResult execute(const ExecutionRequest& req) = 0;
};

struct PoolConfig {
    int unhealthy_after_failures = 3;
    int cooldown_ms = 10000;
};

// Thread-safe round-robin scheduler over isolated workers with health
// tracking: a worker is skipped after consecutive failures until a cooldown
// elapses; transport failures retry once on the next worker.
class WorkerPool final : public SandboxClient {
  public:
    explicit WorkerPool(std::vector<std::unique_ptr<Worker>> workers, PoolConfig cfg = {});

    ExecutionResult execute(const ExecutionRequest& req) override { return dispatch(req); }
    ExecutionResult dispatch(const ExecutionRequest& req);

    size_t size() const { return workers_.size(); }
    std::vector<uint64_t> per_worker_dispatch_counts() const;

  private:
    struct Health {
        int consecutive_failures = 0;
        std::chrono::steady_clock::time_point unhealthy_until{};
        bool unhealthy = false;
        uint64_t dispatches = 0;
    };

    int pick_worker();
    void record_result(int idx, bool transport_ok);

    std::vector<std::unique_ptr<Worker>> workers_;
    PoolConfig cfg_;
    std::atomic<uint64_t> cursor_{0};
    mutable std::mutex health_mu_;
    std::vector<Health> health_;
};

}  // namespace agent0
