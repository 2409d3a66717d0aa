#pragma once

#include <chrono>
#include <csignal>
#include <cstring>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "tempdir.hpp"

namespace testsupport {

using Millis = std::chrono::milliseconds;

/// Launches a child with stdout/stderr captured into files, so a chatty
/// child never blocks on a full pipe.
class Subprocess {
public:
    Subprocess() = default;
    Subprocess(Subprocess&& other) noexcept { *this = std::move(other); }
    Subprocess& operator=(Subprocess&& other) noexcept {
        if (this != &other) {
            terminate();
            pid_ = other.pid_;
            stdout_path_ = std::move(other.stdout_path_);
            stderr_path_ = std::move(other.stderr_path_);
            other.pid_ = -1;
        }
        return *this;
    }
    Subprocess(const Subprocess&) = delete;
    Subprocess& operator=(const Subprocess&) = delete;
    ~Subprocess() { terminate(); }

    static Subprocess spawn(const std::vector<std::string>& argv, const std::string& out_path,
                            const std::string& err_path) {
        Subprocess p;
        p.stdout_path_ = out_path;
        p.stderr_path_ = err_path;

        std::vector<char*> args;
        args.reserve(argv.size() + 1);
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);

        pid_t pid = ::fork();
        if (pid == 0) {
            int out_fd = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
            int err_fd = ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
            ::dup2(out_fd, STDOUT_FILENO);
            ::dup2(err_fd, STDERR_FILENO);
            ::execv(args[0], args.data());
            ::_exit(127);
        }
        p.pid_ = pid;
        return p;
    }

    pid_t pid() const { return pid_; }
    bool running() const { return pid_ > 0 && ::waitpid(pid_, nullptr, WNOHANG) == 0; }

    std::string stdout_text() const { return slurp(stdout_path_); }
    std::string stderr_text() const { return slurp(stderr_path_); }

    /// Polls captured stderr until it contains `needle`.
    bool wait_for_stderr(std::string_view needle, Millis timeout) const {
        auto deadline = std::chrono::steady_clock::now() + timeout;
        while (std::chrono::steady_clock::now() < deadline) {
            if (stderr_text().find(needle) != std::string::npos) return true;
            std::this_thread::sleep_for(Millis(20));
        }
        return stderr_text().find(needle) != std::string::npos;
    }

    /// Extracts `key=value` from the captured stderr log.
    std::optional<std::string> stderr_field(std::string_view event, std::string_view key) const {
        std::string text = stderr_text();
        std::size_t at = text.find(std::string("event=") + std::string(event));
        if (at == std::string::npos) return std::nullopt;
        std::size_t eol = text.find('\n', at);
        std::string line = text.substr(at, eol - at);
        std::string marker = std::string(key) + "=";
        std::size_t kv = line.find(marker);
        if (kv == std::string::npos) return std::nullopt;
        std::size_t begin = kv + marker.size();
        std::size_t end = line.find(' ', begin);
        return line.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
    }

    int wait(Millis timeout = Millis(10000)) {
        if (pid_ <= 0) return -1;
        auto deadline = std::chrono::steady_clock::now() + timeout;
        int status = 0;
        while (std::chrono::steady_clock::now() < deadline) {
            pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_) {
                pid_ = -1;
                return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
            }
            std::this_thread::sleep_for(Millis(5));
        }
        return -2;  // still running
    }

    void terminate() {
        if (pid_ <= 0) return;
        ::kill(pid_, SIGTERM);
        if (wait(Millis(3000)) == -2) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
            pid_ = -1;
        }
    }

    void kill_now() {
        if (pid_ <= 0) return;
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, nullptr, 0);
        pid_ = -1;
    }

private:
    pid_t pid_ = -1;
    std::string stdout_path_;
    std::string stderr_path_;
};

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
    double seconds = 0.0;
};

/// Runs a command to completion, capturing output and wall time.
inline RunResult run_to_completion(const std::vector<std::string>& argv, const TempDir& dir,
                                   Millis timeout = Millis(30000)) {
    static int counter = 0;
    std::string tag = "run" + std::to_string(counter++);
    auto started = std::chrono::steady_clock::now();
    auto child = Subprocess::spawn(argv, dir.file(tag + ".out"), dir.file(tag + ".err"));
    RunResult r;
    r.exit_code = child.wait(timeout);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    r.out = child.stdout_text();
    r.err = child.stderr_text();
    if (r.exit_code == -2) child.kill_now();
    return r;
}

}  // namespace testsupport
