// Copyright 2026 The anchoropt Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Execution results and the client side of the runner protocol: one JSON
// request on the runner's stdin, one JSON ExecutionResult line on stdout.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anchoropt/errors.hpp"
#include "anchoropt/schema.hpp"

namespace anchoropt {

enum class ExecStatus { optimal, infeasible, unbounded, runtime_error, timeout, contract_violation };

inline std::string_view to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::optimal: return "optimal";
    case ExecStatus::infeasible: return "infeasible";
    case ExecStatus::unbounded: return "unbounded";
    case ExecStatus::runtime_error: return "runtime_error";
    case ExecStatus::timeout: return "timeout";
    case ExecStatus::contract_violation: return "contract_violation";
  }
  return "runtime_error";
}

inline ExecStatus parse_exec_status(std::string_view s) {
  if (s == "optimal") return ExecStatus::optimal;
  if (s == "infeasible") return ExecStatus::infeasible;
  if (s == "unbounded") return ExecStatus::unbounded;
  if (s == "runtime_error") return ExecStatus::runtime_error;
  if (s == "timeout") return ExecStatus::timeout;
  if (s == "contract_violation") return ExecStatus::contract_violation;
  throw FormatError("unknown execution status '" + std::string(s) + "'");
}

// Statuses that mean the program itself is broken, as opposed to a solver
// verdict on a program that ran.
inline bool is_execution_failure(ExecStatus s) {
  return s == ExecStatus::runtime_error || s == ExecStatus::contract_violation;
}

struct ExecutionResult {
  ExecStatus status = ExecStatus::runtime_error;
  std::optional<double> objective;
  std::optional<Json> solution;
  std::optional<std::string> error_text;
  double wall_time = 0.0;

  void validate() const {
    if (status == ExecStatus::optimal && !objective)
      throw FormatError("optimal execution result without an objective");
    if (status == ExecStatus::runtime_error && !error_text)
      throw FormatError("runtime_error execution result without error_text");
  }

  friend bool operator==(const ExecutionResult&, const ExecutionResult&) = default;
};

inline Json to_json(const ExecutionResult& r) {
  Json j = Json::object();
  j["status"] = std::string(to_string(r.status));
  j["objective"] = r.objective ? Json(*r.objective) : Json(nullptr);
  j["solution"] = r.solution ? *r.solution : Json(nullptr);
  j["error_text"] = r.error_text ? Json(*r.error_text) : Json(nullptr);
  j["wall_time"] = r.wall_time;
  return j;
}

inline ExecutionResult execution_result_from_json(const Json& j) {
  ExecutionResult r;
  try {
    r.status = parse_exec_status(j.at("status").get<std::string>());
    if (auto it = j.find("objective"); it != j.end() && !it->is_null())
      r.objective = it->get<double>();
    if (auto it = j.find("solution"); it != j.end() && !it->is_null()) r.solution = *it;
    if (auto it = j.find("error_text"); it != j.end() && !it->is_null())
      r.error_text = it->get<std::string>();
    r.wall_time = j.value("wall_time", 0.0);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("execution result: ") + e.what());
  }
  r.validate();
  return r;
}

struct SandboxRequest {
  std::string source;
  Json data = Json::object();
  double timeout = 60.0;  // seconds
  std::string workdir;    // empty: the runner picks a fresh temp dir

  void validate() const {
    if (source.empty()) throw UsageError("sandbox request has empty source");
    if (!(timeout > 0.0)) throw UsageError("sandbox timeout must be positive");
  }
};

inline Json to_json(const SandboxRequest& r) {
  Json j = Json::object();
  j["source"] = r.source;
  j["data"] = r.data;
  j["timeout"] = r.timeout;
  if (!r.workdir.empty()) j["workdir"] = r.workdir;
  return j;
}

class ProgramExecutor {
 public:
  virtual ~ProgramExecutor() = default;
  // Program failures come back as statuses; only an unusable runner throws
  // (SandboxUnavailable).
  virtual ExecutionResult execute(const SandboxRequest& req) = 0;
};

// Spawns the runner command per request.
class RunnerClient : public ProgramExecutor {
 public:
  explicit RunnerClient(std::vector<std::string> argv, double grace_seconds = 10.0)
      : argv_(std::move(argv)), grace_(grace_seconds) {
    if (argv_.empty()) throw UsageError("runner command is empty");
  }

  ExecutionResult execute(const SandboxRequest& req) override {
    req.validate();
    const std::string input = to_json(req).dump() + "\n";
    auto output = run_process(input, req.timeout + grace_);
    auto newline = output.find('\n');
    std::string line = output.substr(0, newline);
    try {
      return execution_result_from_json(Json::parse(line));
    } catch (const Json::parse_error&) {
      throw SandboxUnavailable("runner produced no result line: '" + line.substr(0, 200) + "'");
    } catch (const FormatError& e) {
      throw SandboxUnavailable(std::string("runner produced a malformed result: ") + e.what());
    }
  }

 private:
  std::string run_process(const std::string& input, double deadline_seconds) {
    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (pipe(in_pipe) != 0) throw SandboxUnavailable("pipe failed");
    if (pipe(out_pipe) != 0) {
      close(in_pipe[0]);
      close(in_pipe[1]);
      throw SandboxUnavailable("pipe failed");
    }
    // exec failures are reported through this close-on-exec pipe
    if (pipe2(err_pipe, O_CLOEXEC) != 0) {
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
      throw SandboxUnavailable("pipe failed");
    }

    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);

    pid_t pid = fork();
    if (pid < 0) {
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]})
        close(fd);
      throw SandboxUnavailable("fork failed");
    }
    if (pid == 0) {
      setpgid(0, 0);
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      close(out_pipe[1]);
      close(err_pipe[0]);
      execvp(args[0], args.data());
      int code = errno;
      (void)!write(err_pipe[1], &code, sizeof code);
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);

    int exec_errno = 0;
    if (read(err_pipe[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno) {
      close(err_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      waitpid(pid, nullptr, 0);
      throw SandboxUnavailable("cannot start runner '" + argv_[0] + "': " + std::strerror(exec_errno));
    }
    close(err_pipe[0]);

    signal(SIGPIPE, SIG_IGN);
    fcntl(in_pipe[1], F_SETFL, O_NONBLOCK);
    std::size_t written = 0;
    int in_fd = in_pipe[1];
    int out_fd = out_pipe[0];
    std::string output;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(static_cast<long long>(deadline_seconds * 1000));
    bool timed_out = false;
    while (out_fd >= 0) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                      deadline - std::chrono::steady_clock::now())
                      .count();
      if (left <= 0) {
        timed_out = true;
        break;
      }
      pollfd fds[2];
      int n = 0;
      fds[n++] = {out_fd, POLLIN, 0};
      if (in_fd >= 0) fds[n++] = {in_fd, POLLOUT, 0};
      int rc = poll(fds, n, static_cast<int>(left));
      if (rc < 0 && errno == EINTR) continue;
      if (rc < 0) break;
      if (n == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
        ssize_t w = write(in_fd, input.data() + written, input.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) written = input.size();
        if (written >= input.size()) {
          close(in_fd);
          in_fd = -1;
        }
      }
      if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
        char buf[4096];
        ssize_t r = read(out_fd, buf, sizeof buf);
        if (r > 0) {
          output.append(buf, static_cast<std::size_t>(r));
        } else if (r == 0 || errno != EINTR) {
          close(out_fd);
          out_fd = -1;
        }
      }
    }
    if (in_fd >= 0) close(in_fd);
    if (out_fd >= 0) close(out_fd);
    if (timed_out) kill(-pid, SIGKILL);
    int status = 0;
    waitpid(pid, &status, 0);
    if (timed_out) throw SandboxUnavailable("runner did not answer within its deadline");
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw SandboxUnavailable("runner exited abnormally (status " + std::to_string(status) + ")");
    return output;
  }

  std::vector<std::string> argv_;
  double grace_;
};

}  // namespace anchoropt
