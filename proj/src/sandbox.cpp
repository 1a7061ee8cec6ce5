#include "agent0/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>

#include "agent0/common.hpp"

namespace agent0 {

std::string_view exec_status_name(ExecStatus s) {
    switch (s) {
        case ExecStatus::ok: return "ok";
        case ExecStatus::error: return "error";
        case ExecStatus::timeout: return "timeout";
        case ExecStatus::transport_failure: return "transport_failure";
    }
    return "error";
}

// ---------------------------------------------------------------------------
// Mock-language interpreter: exact rational arithmetic over int64 with
// overflow detection, assignments and print statements.
// ---------------------------------------------------------------------------

namespace {

struct Rat {
    long long num = 0;
    long long den = 1;
};

struct EvalError {
    std::string message;
};

using EvalResult = Result<Rat, EvalError>;

bool mul_overflow(long long a, long long b, long long* out) {
    return __builtin_mul_overflow(a, b, out);
}
bool add_overflow(long long a, long long b, long long* out) {
    return __builtin_add_overflow(a, b, out);
}

long long gcd_ll(long long a, long long b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b) {
        long long t = a % b;
        a = b;
        b = t;
    }
    return a;
}

EvalResult normalize(Rat r) {
    if (r.den == 0) return EvalError{"division by zero"};
    if (r.den < 0) {
        if (r.den == std::numeric_limits<long long>::min()) return EvalError{"overflow"};
        r.den = -r.den;
        if (r.num == std::numeric_limits<long long>::min()) return EvalError{"overflow"};
        r.num = -r.num;
    }
    long long g = gcd_ll(r.num, r.den);
    if (g > 1) {
        r.num /= g;
        r.den /= g;
    }
    return r;
}

EvalResult rat_add(Rat a, Rat b, bool subtract) {
    long long x, y, d;
    if (mul_overflow(a.num, b.den, &x) || mul_overflow(b.num, a.den, &y) ||
        mul_overflow(a.den, b.den, &d))
        return EvalError{"overflow"};
    if (subtract) y = -y;
    long long n;
    if (add_overflow(x, y, &n)) return EvalError{"overflow"};
    return normalize(Rat{n, d});
}

EvalResult rat_mul(Rat a, Rat b) {
    long long n, d;
    if (mul_overflow(a.num, b.num, &n) || mul_overflow(a.den, b.den, &d))
        return EvalError{"overflow"};
    return normalize(Rat{n, d});
}

EvalResult rat_div(Rat a, Rat b) {
    if (b.num == 0) return EvalError{"division by zero"};
    long long n, d;
    if (mul_overflow(a.num, b.den, &n) || mul_overflow(a.den, b.num, &d))
        return EvalError{"overflow"};
    return normalize(Rat{n, d});
}

std::string rat_to_string(const Rat& r) {
    if (r.den == 1) return std::to_string(r.num);
    return std::to_string(r.num) + "/" + std::to_string(r.den);
}

class ExprParser {
  public:
    ExprParser(std::string_view src, const std::vector<std::pair<std::string, Rat>>& vars)
        : src_(src), vars_(vars) {}

    EvalResult parse() {
        auto v = parse_sum();
        if (!v) return v;
        skip_ws();
        if (pos_ != src_.size())
            return EvalError{"unexpected character '" + std::string(1, src_[pos_]) + "'"};
        return v;
    }

  private:
    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    EvalResult parse_sum() {
        auto lhs = parse_product();
        if (!lhs) return lhs;
        Rat acc = lhs.value();
        while (true) {
            skip_ws();
            if (pos_ >= src_.size() || (src_[pos_] != '+' && src_[pos_] != '-')) return acc;
            char op = src_[pos_++];
            auto rhs = parse_product();
            if (!rhs) return rhs;
            auto r = rat_add(acc, rhs.value(), op == '-');
            if (!r) return r;
            acc = r.value();
        }
    }

    EvalResult parse_product() {
        auto lhs = parse_unary();
        if (!lhs) return lhs;
        Rat acc = lhs.value();
        while (true) {
            skip_ws();
            if (pos_ >= src_.size() || (src_[pos_] != '*' && src_[pos_] != '/')) return acc;
            char op = src_[pos_++];
            auto rhs = parse_unary();
            if (!rhs) return rhs;
            auto r = op == '*' ? rat_mul(acc, rhs.value()) : rat_div(acc, rhs.value());
            if (!r) return r;
            acc = r.value();
        }
    }

    EvalResult parse_unary() {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == '-') {
            ++pos_;
            auto v = parse_unary();
            if (!v) return v;
            Rat r = v.value();
            if (r.num == std::numeric_limits<long long>::min()) return EvalError{"overflow"};
            r.num = -r.num;
            return r;
        }
        if (pos_ < src_.size() && src_[pos_] == '+') {
            ++pos_;
            return parse_unary();
        }
        return parse_atom();
    }

    EvalResult parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) return EvalError{"unexpected end of expression"};
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            auto v = parse_sum();
            if (!v) return v;
            skip_ws();
            if (pos_ >= src_.size() || src_[pos_] != ')')
                return EvalError{"missing closing parenthesis"};
            ++pos_;
            return v;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            long long v = 0;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                long long digit = src_[pos_] - '0';
                if (mul_overflow(v, 10, &v) || add_overflow(v, digit, &v))
                    return EvalError{"overflow"};
                ++pos_;
            }
            return Rat{v, 1};
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            std::string name(src_.substr(start, pos_ - start));
            for (const auto& [n, v] : vars_)
                if (n == name) return v;
            return EvalError{"unknown variable '" + name + "'"};
        }
        return EvalError{"unexpected character '" + std::string(1, c) + "'"};
    }

    std::string_view src_;
    const std::vector<std::pair<std::string, Rat>>& vars_;
    size_t pos_ = 0;
};

}  // namespace

ExecutionResult execute_mock(const ExecutionRequest& req) {
    if (trim_view(req.code).empty())
        return ExecutionResult{ExecStatus::error, "empty code", 0, -1};

    std::vector<std::pair<std::string, Rat>> vars;
    std::vector<std::string> prints;

    size_t line_no = 0;
    size_t pos = 0;
    while (pos <= req.code.size()) {
        size_t eol = req.code.find('\n', pos);
        std::string_view line = eol == std::string::npos
                                    ? std::string_view(req.code).substr(pos)
                                    : std::string_view(req.code).substr(pos, eol - pos);
        pos = eol == std::string::npos ? req.code.size() + 1 : eol + 1;
        ++line_no;
        std::string_view stmt = trim_view(line);
        if (stmt.empty()) continue;

        auto fail = [&](const std::string& msg) {
            return ExecutionResult{ExecStatus::error,
                                   "line " + std::to_string(line_no) + ": " + msg, 0, -1};
        };

        if (stmt.starts_with("print")) {
            std::string_view rest = trim_view(stmt.substr(5));
            if (rest.empty() || rest.front() != '(' || rest.back() != ')')
                return fail("malformed print statement");
            auto v = ExprParser(rest.substr(1, rest.size() - 2), vars).parse();
            if (!v) return fail(v.error().message);
            prints.push_back(rat_to_string(v.value()));
            continue;
        }

        auto eq = stmt.find('=');
        if (eq != std::string_view::npos) {
            std::string name(trim_view(stmt.substr(0, eq)));
            bool valid = !name.empty() &&
                         (std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_');
            for (char ch : name)
                valid = valid && (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_');
            if (!valid) return fail("invalid assignment target '" + name + "'");
            auto v = ExprParser(stmt.substr(eq + 1), vars).parse();
            if (!v) return fail(v.error().message);
            bool replaced = false;
            for (auto& [n, val] : vars)
                if (n == name) val = v.value(), replaced = true;
            if (!replaced) vars.emplace_back(name, v.value());
            continue;
        }
        return fail("expected assignment or print statement");
    }

    std::string out;
    for (size_t i = 0; i < prints.size(); ++i) {
        if (i) out += "\n";
        out += prints[i];
    }
    return ExecutionResult{ExecStatus::ok, out, 0, -1};
}

// ---------------------------------------------------------------------------
// Subprocess execution: fresh process per request, own process group, wall
// clock timeout via kill, stdout+stderr captured through pipes.
// ---------------------------------------------------------------------------

namespace {

void append_capped(std::string& buf, const char* data, size_t n, const SubprocessConfig& cfg,
                   bool* truncated) {
    if (*truncated) return;
    size_t room = cfg.output_cap_bytes > buf.size() ? cfg.output_cap_bytes - buf.size() : 0;
    if (n <= room) {
        buf.append(data, n);
        return;
    }
    buf.append(data, room);
    buf += cfg.truncation_marker;
    *truncated = true;
}

}  // namespace

ExecutionResult execute_subprocess(const ExecutionRequest& req, const SubprocessConfig& cfg) {
    namespace fs = std::filesystem;
    auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start)
            .count();
    };

    if (cfg.argv.empty())
        return {ExecStatus::transport_failure, "subprocess: empty command", 0, -1};

    // materialize argv, expanding {file}
    std::optional<fs::path> code_file;
    std::vector<std::string> argv = cfg.argv;
    bool uses_file = false;
    for (auto& a : argv) {
        auto p = a.find("{file}");
        if (p == std::string::npos) continue;
        if (!code_file) {
            code_file = fs::temp_directory_path() /
                        ("agent0_code_" + std::to_string(::getpid()) + "_" + req.request_id);
            std::ofstream f(*code_file);
            f << req.code;
            if (!f) return {ExecStatus::transport_failure, "subprocess: cannot write code file",
                            0, -1};
        }
        a.replace(p, 6, code_file->string());
        uses_file = true;
    }
    struct FileGuard {
        std::optional<fs::path> p;
        ~FileGuard() {
            if (p) {
                std::error_code ec;
                fs::remove(*p, ec);
            }
        }
    } guard{code_file};

    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (pipe(in_pipe) || pipe(out_pipe) || pipe(err_pipe))
        return {ExecStatus::transport_failure, "subprocess: pipe() failed", 0, -1};

    pid_t pid = fork();
    if (pid < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]})
            close(fd);
        return {ExecStatus::transport_failure, "subprocess: fork() failed", 0, -1};
    }

    if (pid == 0) {
        setpgid(0, 0);  // own process group so the whole tree can be killed
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]})
            close(fd);
        std::vector<char*> cargv;
        for (auto& a : argv) cargv.push_back(a.data());
        cargv.push_back(nullptr);
        execvp(cargv[0], cargv.data());
        fprintf(stderr, "exec failed: %s\n", strerror(errno));
        _exit(127);
    }

    setpgid(pid, pid);
    close(in_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);

    // feed code on stdin when not using a file
    if (!uses_file) {
        size_t off = 0;
        while (off < req.code.size()) {
            ssize_t n = write(in_pipe[1], req.code.data() + off, req.code.size() - off);
            if (n <= 0) break;
            off += static_cast<size_t>(n);
        }
    }
    close(in_pipe[1]);

    std::string out_buf, err_buf;
    bool out_trunc = false, err_trunc = false;
    bool timed_out = false;
    int out_fd = out_pipe[0], err_fd = err_pipe[0];
    char buf[4096];

    while (out_fd >= 0 || err_fd >= 0) {
        long remaining = req.timeout_ms - elapsed_ms();
        if (remaining <= 0) {
            timed_out = true;
            break;
        }
        pollfd fds[2];
        nfds_t nfds = 0;
        if (out_fd >= 0) fds[nfds++] = {out_fd, POLLIN, 0};
        if (err_fd >= 0) fds[nfds++] = {err_fd, POLLIN, 0};
        int rc = poll(fds, nfds, static_cast<int>(std::min<long>(remaining, 50)));
        if (rc < 0 && errno != EINTR) break;
        for (nfds_t i = 0; i < nfds; ++i) {
            if (!(fds[i].revents & (POLLIN | POLLHUP))) continue;
            ssize_t n = read(fds[i].fd, buf, sizeof(buf));
            bool is_out = fds[i].fd == out_fd;
            if (n > 0) {
                append_capped(is_out ? out_buf : err_buf, buf, static_cast<size_t>(n), cfg,
                              is_out ? &out_trunc : &err_trunc);
            } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
                close(fds[i].fd);
                (is_out ? out_fd : err_fd) = -1;
            }
        }
    }

    int status = 0;
    if (timed_out) {
        kill(-pid, SIGKILL);
        waitpid(pid, &status, 0);
        if (out_fd >= 0) close(out_fd);
        if (err_fd >= 0) close(err_fd);
        return {ExecStatus::timeout,
                "timeout after " + std::to_string(req.timeout_ms) + " ms", elapsed_ms(), -1};
    }
    if (out_fd >= 0) close(out_fd);
    if (err_fd >= 0) close(err_fd);

    // drain whatever remains within the grace period, then reap
    if (waitpid(pid, &status, WNOHANG) == 0) {
        long deadline = elapsed_ms() + cfg.kill_grace_ms;
        while (waitpid(pid, &status, WNOHANG) == 0 && elapsed_ms() < deadline)
            usleep(1000);
        if (waitpid(pid, &status, WNOHANG) == 0) {
            kill(-pid, SIGKILL);
            waitpid(pid, &status, 0);
        }
    }

    if (WIFEXITED(status) && WEXITSTATUS(status) == 0)
        return {ExecStatus::ok, out_buf, elapsed_ms(), -1};
    std::string diag = err_buf.empty() ? "exited with status " +
                                             std::to_string(WIFEXITED(status)
                                                                ? WEXITSTATUS(status)
                                                                : -1)
                                       : err_buf;
    return {ExecStatus::error, diag, elapsed_ms(), -1};
}

// ---------------------------------------------------------------------------
// WorkerPool
// ---------------------------------------------------------------------------

WorkerPool::WorkerPool(std::vector<std::unique_ptr<Worker>> workers, PoolConfig cfg)
    : workers_(std::move(workers)), cfg_(cfg), health_(workers_.size()) {
    if (workers_.empty()) throw ConfigError("worker pool needs at least one endpoint");
}

int WorkerPool::pick_worker() {
    uint64_t slot = cursor_.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard lock(health_mu_);
    auto now = std::chrono::steady_clock::now();
    for (size_t probe = 0; probe < workers_.size(); ++probe) {
        size_t idx = (slot + probe) % workers_.size();
        auto& h = health_[idx];
        if (h.unhealthy) {
            if (now < h.unhealthy_until) continue;
            h.unhealthy = false;  // cooldown elapsed; give it another chance
            h.consecutive_failures = 0;
        }
        ++h.dispatches;
        return static_cast<int>(idx);
    }
    return -1;
}

void WorkerPool::record_result(int idx, bool transport_ok) {
    std::lock_guard lock(health_mu_);
    auto& h = health_[static_cast<size_t>(idx)];
    if (transport_ok) {
        h.consecutive_failures = 0;
        return;
    }
    if (++h.consecutive_failures >= cfg_.unhealthy_after_failures) {
        h.unhealthy = true;
        h.unhealthy_until =
            std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.cooldown_ms);
    }
}

ExecutionResult WorkerPool::dispatch(const ExecutionRequest& req) {
    ExecutionResult last{ExecStatus::transport_failure, "no healthy workers", 0, -1};
    // the original attempt plus one retry on the next worker
    for (int attempt = 0; attempt < 2; ++attempt) {
        int idx = pick_worker();
        if (idx < 0) return ExecutionResult{ExecStatus::transport_failure, "no healthy workers",
                                            0, -1};
        ExecutionResult res;
        try {
            res = workers_[static_cast<size_t>(idx)]->execute(req);
        } catch (const std::exception& e) {
            res = ExecutionResult{ExecStatus::transport_failure,
                                  std::string("worker exception: ") + e.what(), 0, -1};
        }
        res.worker_id = idx;
        bool transport_ok = res.status != ExecStatus::transport_failure;
        record_result(idx, transport_ok);
        if (transport_ok) return res;
        last = res;
    }
    return last;
}

std::vector<uint64_t> WorkerPool::per_worker_dispatch_counts() const {
    std::lock_guard lock(health_mu_);
    std::vector<uint64_t> out;
    out.reserve(health_.size());
    for (const auto& h : health_) out.push_back(h.dispatches);
    return out;
}

}  // namespace agent0
