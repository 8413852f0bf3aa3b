#pragma once

// Execution services: run one entry point of a Python-subset program on
// literal arguments and report the value, exception class or timeout.

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "callforge/util.hpp"
#include "callforge/value.hpp"

namespace callforge {

struct ExecRequest {
  std::string id;
  std::string source;
  std::string entry_point;
  ValueList call_args;
  double timeout_s{10.0};
  std::vector<std::string> trace_nodes;
};

struct ExecResponse {
  enum class Status { Ok, Exception, Timeout, CompileError, MalformedRequest };

  std::string id;
  Status status{Status::MalformedRequest};
  std::string value_repr;      // Ok
  std::string exception_type;  // Exception, CompileError
  std::string message;
  std::map<std::string, std::string> traces;
  double duration_ms{0.0};
  std::string stderr_tail;

  [[nodiscard]] bool ok() const { return status == Status::Ok; }
};

std::string_view to_string(ExecResponse::Status s);
std::optional<ExecResponse::Status> parse_exec_status(std::string_view s);

/// Wire codec for the line-delimited worker protocol. Argument literals
/// travel as repr strings so tuples, sets and float precision survive.
Json encode_request(const ExecRequest &req);
ExecRequest decode_request(const Json &j);  // throws std::invalid_argument
Json encode_response(const ExecResponse &resp);
ExecResponse decode_response(const Json &j);  // throws std::invalid_argument

/// Raised when the service itself cannot run code, as opposed to the code failing.
class SandboxUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExecutionService {
 public:
  virtual ~ExecutionService() = default;
  virtual ExecResponse run(const ExecRequest &req) = 0;
  /// Responses come back in request order whatever the completion order.
  virtual std::vector<ExecResponse> run_batch(const std::vector<ExecRequest> &reqs);
  [[nodiscard]] virtual std::size_t concurrency() const { return 1; }
};

/// In-process reference interpreter; each request gets a fresh namespace.
class BuiltinSandbox : public ExecutionService {
 public:
  explicit BuiltinSandbox(std::size_t concurrency = 1, std::vector<std::string> allowed_imports = {"math"})
      : concurrency_(concurrency), allowed_imports_(std::move(allowed_imports)) {}

  ExecResponse run(const ExecRequest &req) override;
  [[nodiscard]] std::size_t concurrency() const override { return concurrency_; }

 private:
  std::size_t concurrency_;
  std::vector<std::string> allowed_imports_;
};

struct WorkerPoolOptions {
  std::vector<std::string> command;  // argv of the worker process
  std::size_t workers{1};
  /// Added to a request's own timeout before the parent kills the worker.
  std::chrono::milliseconds kill_grace{1000};
};

/// Client side of the worker protocol: a pool of subprocesses, one JSON
/// request per line on stdin, one response per line on stdout. A worker
/// that overruns its deadline is killed and replaced.
class WorkerPoolSandbox : public ExecutionService {
 public:
  explicit WorkerPoolSandbox(WorkerPoolOptions options);
  ~WorkerPoolSandbox() override;
  WorkerPoolSandbox(const WorkerPoolSandbox &) = delete;
  WorkerPoolSandbox &operator=(const WorkerPoolSandbox &) = delete;

  ExecResponse run(const ExecRequest &req) override;
  [[nodiscard]] std::size_t concurrency() const override { return options_.workers; }
  /// Number of workers started so far, including replacements.
  [[nodiscard]] std::size_t spawned() const;

 private:
  struct Worker;
  std::unique_ptr<Worker> acquire();
  void release(std::unique_ptr<Worker> w);
  std::unique_ptr<Worker> spawn();

  WorkerPoolOptions options_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<Worker>> idle_;
  std::size_t live_{0};
  std::size_t spawned_{0};
  std::uint64_t next_id_{0};
};

/// Serves the worker protocol over the given file descriptors until EOF,
/// executing each request with the reference interpreter. With
/// `enforce_timeouts` false the worker never stops a runaway request itself
/// and relies on the parent to kill it. Returns the process exit code.
int serve_worker_protocol(int in_fd, int out_fd, bool enforce_timeouts);

}  // namespace callforge
