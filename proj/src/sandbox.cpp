#include "callforge/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "callforge/interpreter.hpp"

namespace callforge {

namespace {

constexpr std::size_t kStderrTail = 2048;

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string_view to_string(ExecResponse::Status s) {
  switch (s) {
    case ExecResponse::Status::Ok: return "ok";
    case ExecResponse::Status::Exception: return "exception";
    case ExecResponse::Status::Timeout: return "timeout";
    case ExecResponse::Status::CompileError: return "compile_error";
    case ExecResponse::Status::MalformedRequest: return "malformed_request";
  }
  return "malformed_request";
}

std::optional<ExecResponse::Status> parse_exec_status(std::string_view s) {
  for (auto st : {ExecResponse::Status::Ok, ExecResponse::Status::Exception, ExecResponse::Status::Timeout,
                  ExecResponse::Status::CompileError, ExecResponse::Status::MalformedRequest}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

Json encode_request(const ExecRequest &req) {
  Json args = Json::array();
  for (const auto &a : req.call_args) args.push_back(a.repr());
  Json j = {{"id", req.id},
            {"source", req.source},
            {"entry_point", req.entry_point},
            {"call_args", args},
            {"timeout_s", req.timeout_s}};
  if (!req.trace_nodes.empty()) j["trace_nodes"] = req.trace_nodes;
  return j;
}

ExecRequest decode_request(const Json &j) {
  if (!j.is_object()) throw std::invalid_argument("request must be a JSON object");
  auto str_field = [&](const char *name) {
    if (!j.contains(name) || !j[name].is_string()) {
      throw std::invalid_argument(std::string("request field '") + name + "' must be a string");
    }
    return j[name].get<std::string>();
  };
  ExecRequest req;
  if (j.contains("id")) req.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  req.source = str_field("source");
  req.entry_point = str_field("entry_point");
  if (!j.contains("call_args") || !j["call_args"].is_array()) {
    throw std::invalid_argument("request field 'call_args' must be an array");
  }
  for (const auto &a : j["call_args"]) {
    if (!a.is_string()) throw std::invalid_argument("call_args entries must be literal strings");
    try {
      req.call_args.push_back(parse_literal(a.get<std::string>()));
    } catch (const LiteralError &e) {
      throw std::invalid_argument(std::string("bad call_args literal: ") + e.what());
    }
  }
  if (j.contains("timeout_s")) {
    if (!j["timeout_s"].is_number() || j["timeout_s"].get<double>() <= 0) {
      throw std::invalid_argument("request field 'timeout_s' must be a positive number");
    }
    req.timeout_s = j["timeout_s"].get<double>();
  }
  if (j.contains("trace_nodes")) {
    if (!j["trace_nodes"].is_array()) throw std::invalid_argument("trace_nodes must be an array");
    for (const auto &n : j["trace_nodes"]) {
      if (!n.is_string()) throw std::invalid_argument("trace_nodes entries must be strings");
      req.trace_nodes.push_back(n.get<std::string>());
    }
  }
  return req;
}

Json encode_response(const ExecResponse &resp) {
  Json j = {{"id", resp.id}, {"status", std::string(to_string(resp.status))}};
  if (resp.status == ExecResponse::Status::Ok) j["value_repr"] = resp.value_repr;
  if (!resp.exception_type.empty()) j["exception_type"] = resp.exception_type;
  if (!resp.message.empty()) j["message"] = resp.message;
  Json traces = Json::object();
  for (const auto &[k, v] : resp.traces) traces[k] = v;
  j["traces"] = traces;
  j["duration_ms"] = resp.duration_ms;
  j["stderr_tail"] = resp.stderr_tail;
  return j;
}

ExecResponse decode_response(const Json &j) {
  if (!j.is_object()) throw std::invalid_argument("response must be a JSON object");
  ExecResponse r;
  if (j.contains("id") && j["id"].is_string()) r.id = j["id"].get<std::string>();
  if (!j.contains("status") || !j["status"].is_string()) throw std::invalid_argument("response lacks status");
  auto st = parse_exec_status(j["status"].get<std::string>());
  if (!st) throw std::invalid_argument("unknown response status '" + j["status"].get<std::string>() + "'");
  r.status = *st;
  auto opt_str = [&](const char *name) {
    return (j.contains(name) && j[name].is_string()) ? j[name].get<std::string>() : std::string();
  };
  r.value_repr = opt_str("value_repr");
  r.exception_type = opt_str("exception_type");
  r.message = opt_str("message");
  r.stderr_tail = opt_str("stderr_tail");
  if (j.contains("duration_ms") && j["duration_ms"].is_number()) r.duration_ms = j["duration_ms"].get<double>();
  if (j.contains("traces") && j["traces"].is_object()) {
    for (const auto &[k, v] : j["traces"].items()) {
      if (v.is_string()) r.traces[k] = v.get<std::string>();
    }
  }
  if (r.status == ExecResponse::Status::Ok && !j.contains("value_repr")) {
    throw std::invalid_argument("ok response lacks value_repr");
  }
  if ((r.status == ExecResponse::Status::Exception || r.status == ExecResponse::Status::CompileError) &&
      r.exception_type.empty()) {
    throw std::invalid_argument("failed response lacks exception_type");
  }
  return r;
}

std::vector<ExecResponse> ExecutionService::run_batch(const std::vector<ExecRequest> &reqs) {
  std::vector<ExecResponse> out(reqs.size());
  parallel_for(reqs.size(), concurrency(), [&](std::size_t i) { out[i] = run(reqs[i]); });
  return out;
}

namespace {

ExecResponse run_in_process(const ExecRequest &req, const std::vector<std::string> &allowed_imports,
                            std::chrono::milliseconds timeout) {
  auto start = std::chrono::steady_clock::now();
  ExecLimits limits;
  limits.timeout = timeout;
  limits.allowed_imports = allowed_imports;
  auto outcome = execute_python(req.source, req.entry_point, req.call_args, limits, req.trace_nodes);
  ExecResponse r;
  r.id = req.id;
  switch (outcome.status) {
    case ExecOutcome::Status::Ok:
      r.status = ExecResponse::Status::Ok;
      r.value_repr = outcome.value.repr();
      break;
    case ExecOutcome::Status::Exception: r.status = ExecResponse::Status::Exception; break;
    case ExecOutcome::Status::Timeout: r.status = ExecResponse::Status::Timeout; break;
    case ExecOutcome::Status::CompileError: r.status = ExecResponse::Status::CompileError; break;
  }
  r.exception_type = outcome.exception_type;
  r.message = outcome.message;
  r.traces = std::move(outcome.traces);
  if (outcome.output.size() > kStderrTail) outcome.output.erase(0, outcome.output.size() - kStderrTail);
  r.stderr_tail = std::move(outcome.output);
  r.duration_ms = elapsed_ms(start);
  return r;
}

std::chrono::milliseconds to_ms(double seconds) {
  return std::chrono::milliseconds(static_cast<std::int64_t>(seconds * 1000.0));
}

}  // namespace

ExecResponse BuiltinSandbox::run(const ExecRequest &req) {
  return run_in_process(req, allowed_imports_, to_ms(req.timeout_s));
}

// -- worker pool ------------------------------------------------------------

struct WorkerPoolSandbox::Worker {
  pid_t pid{-1};
  int to_child{-1};    // socket end wired to the child's stdin
  int from_child{-1};  // pipe read end of the child's stdout
  std::string buffer;

  ~Worker() { terminate(); }

  void terminate() {
    if (to_child >= 0) close(to_child);
    if (from_child >= 0) close(from_child);
    to_child = from_child = -1;
    if (pid > 0) {
      kill(pid, SIGKILL);
      int status = 0;
      while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
      }
      pid = -1;
    }
  }

  bool send_line(const std::string &line) const {
    std::size_t off = 0;
    while (off < line.size()) {
      ssize_t n = send(to_child, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  enum class ReadResult { Line, Timeout, Closed };

  ReadResult read_line(std::string &line, std::chrono::steady_clock::time_point deadline) {
    while (true) {
      auto nl = buffer.find('\n');
      if (nl != std::string::npos) {
        line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        return ReadResult::Line;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return ReadResult::Timeout;
      pollfd pfd{from_child, POLLIN, 0};
      int rc = poll(&pfd, 1, static_cast<int>(std::min<std::int64_t>(left.count(), 1 << 30)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        return ReadResult::Closed;
      }
      if (rc == 0) return ReadResult::Timeout;
      char buf[65536];
      ssize_t n = read(from_child, buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return ReadResult::Closed;
      buffer.append(buf, static_cast<std::size_t>(n));
    }
  }
};

WorkerPoolSandbox::WorkerPoolSandbox(WorkerPoolOptions options) : options_(std::move(options)) {
  if (options_.command.empty()) throw std::invalid_argument("worker command must not be empty");
  if (options_.workers == 0) options_.workers = 1;
}

WorkerPoolSandbox::~WorkerPoolSandbox() = default;

std::size_t WorkerPoolSandbox::spawned() const {
  std::lock_guard lock(mu_);
  return spawned_;
}

std::unique_ptr<WorkerPoolSandbox::Worker> WorkerPoolSandbox::spawn() {
  int sv[2];
  if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw SandboxUnavailable(std::string("socketpair: ") + std::strerror(errno));
  }
  int out_pipe[2];
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    close(sv[0]);
    close(sv[1]);
    throw SandboxUnavailable(std::string("pipe: ") + std::strerror(errno));
  }
  std::vector<char *> argv;
  for (const auto &a : options_.command) argv.push_back(const_cast<char *>(a.c_str()));
  argv.push_back(nullptr);
  pid_t pid = fork();
  if (pid < 0) {
    close(sv[0]);
    close(sv[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    throw SandboxUnavailable(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    dup2(sv[1], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(sv[1]);
  close(out_pipe[1]);
  auto w = std::make_unique<Worker>();
  w->pid = pid;
  w->to_child = sv[0];
  w->from_child = out_pipe[0];
  return w;
}

std::unique_ptr<WorkerPoolSandbox::Worker> WorkerPoolSandbox::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !idle_.empty() || live_ < options_.workers; });
  if (!idle_.empty()) {
    auto w = std::move(idle_.back());
    idle_.pop_back();
    return w;
  }
  ++live_;
  ++spawned_;
  lock.unlock();
  try {
    return spawn();
  } catch (...) {
    lock.lock();
    --live_;
    cv_.notify_one();
    throw;
  }
}

void WorkerPoolSandbox::release(std::unique_ptr<Worker> w) {
  std::lock_guard lock(mu_);
  if (w) {
    idle_.push_back(std::move(w));
  } else {
    --live_;
  }
  cv_.notify_one();
}

ExecResponse WorkerPoolSandbox::run(const ExecRequest &req) {
  ExecRequest tagged = req;
  {
    std::lock_guard lock(mu_);
    tagged.id = req.id.empty() ? "r" + std::to_string(next_id_) : req.id;
    ++next_id_;
  }
  const std::string line = encode_request(tagged).dump() + "\n";
  std::string failure;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto start = std::chrono::steady_clock::now();
    auto w = acquire();
    if (!w->send_line(line)) {
      failure = "worker closed its input";
      w.reset();
      release(nullptr);
      continue;
    }
    auto deadline = start + to_ms(req.timeout_s) + options_.kill_grace;
    std::string reply;
    auto rr = w->read_line(reply, deadline);
    if (rr == Worker::ReadResult::Timeout) {
      w.reset();  // hard kill; a replacement is spawned on demand
      release(nullptr);
      ExecResponse r;
      r.id = tagged.id;
      r.status = ExecResponse::Status::Timeout;
      r.message = "killed after " + std::to_string(static_cast<long long>(elapsed_ms(start))) + " ms";
      r.duration_ms = elapsed_ms(start);
      return r;
    }
    if (rr == Worker::ReadResult::Closed) {
      failure = "worker exited before responding";
      w.reset();
      release(nullptr);
      continue;
    }
    try {
      ExecResponse r = decode_response(Json::parse(reply));
      if (r.id != tagged.id) throw std::invalid_argument("response id '" + r.id + "' does not match request");
      release(std::move(w));
      r.id = req.id;
      return r;
    } catch (const std::exception &e) {
      failure = std::string("protocol error: ") + e.what();
      w.reset();
      release(nullptr);
    }
  }
  throw SandboxUnavailable(failure);
}

// -- worker side --------------------------------------------------------------

int serve_worker_protocol(int in_fd, int out_fd, bool enforce_timeouts) {
  std::string buffer;
  auto write_all = [&](const std::string &s) {
    std::size_t off = 0;
    while (off < s.size()) {
      ssize_t n = write(out_fd, s.data() + off, s.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  };
  auto handle = [&](const std::string &line) {
    ExecResponse resp;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error &e) {
      resp.status = ExecResponse::Status::MalformedRequest;
      resp.message = e.what();
      return encode_response(resp).dump() + "\n";
    }
    try {
      ExecRequest req = decode_request(j);
      auto timeout = enforce_timeouts ? to_ms(req.timeout_s) : std::chrono::milliseconds(std::chrono::hours(24));
      resp = run_in_process(req, {"math"}, timeout);
    } catch (const std::invalid_argument &e) {
      resp.status = ExecResponse::Status::MalformedRequest;
      resp.message = e.what();
      if (j.is_object() && j.contains("id") && j["id"].is_string()) resp.id = j["id"].get<std::string>();
    }
    return encode_response(resp).dump() + "\n";
  };
  char buf[65536];
  while (true) {
    ssize_t n = read(in_fd, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) return 2;
    if (n == 0) break;
    buffer.append(buf, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (trim(line).empty()) continue;
      if (!write_all(handle(line))) return 2;
    }
  }
  if (!trim(buffer).empty() && !write_all(handle(buffer))) return 2;
  return 0;
}

}  // namespace callforge
