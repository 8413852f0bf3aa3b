#include <doctest.h>

#include <sys/socket.h>
#include <unistd.h>

#include <sstream>
#include <thread>

#include "callforge/sandbox.hpp"

using namespace callforge;
using Status = ExecResponse::Status;

namespace {

ExecRequest request(std::string source, std::string entry, ValueList args = {}, double timeout = 5.0) {
  ExecRequest r;
  r.source = std::move(source);
  r.entry_point = std::move(entry);
  r.call_args = std::move(args);
  r.timeout_s = timeout;
  return r;
}

WorkerPoolSandbox pool(const std::string &mode, std::size_t workers = 1) {
  WorkerPoolOptions o;
  o.command = {CALLFORGE_FAKE_WORKER, mode};
  o.workers = workers;
  o.kill_grace = std::chrono::milliseconds(500);
  return WorkerPoolSandbox(o);
}

// Runs the worker loop in-process over a socket pair and returns its output lines.
std::vector<std::string> serve(const std::string &input, int *exit_code = nullptr) {
  int in[2], out[2];
  REQUIRE(socketpair(AF_UNIX, SOCK_STREAM, 0, in) == 0);
  REQUIRE(socketpair(AF_UNIX, SOCK_STREAM, 0, out) == 0);
  int code = -1;
  std::thread worker([&] {
    code = serve_worker_protocol(in[1], out[1], true);
    close(out[1]);
  });
  std::size_t off = 0;
  while (off < input.size()) {
    auto n = write(in[0], input.data() + off, input.size() - off);
    REQUIRE(n > 0);
    off += static_cast<std::size_t>(n);
  }
  close(in[0]);
  std::string text;
  char buf[4096];
  ssize_t n;
  while ((n = read(out[0], buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
  worker.join();
  close(in[1]);
  close(out[0]);
  if (exit_code) *exit_code = code;
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  return lines;
}

const std::vector<std::pair<std::string, std::string>> &class_snippets() {
  static const std::vector<std::pair<std::string, std::string>> s = {
      {"AssertionError", "def f():\n    assert 1 == 2\n    return 0\n"},
      {"ValueError", "def f():\n    return int('seven')\n"},
      {"RecursionError", "def f():\n    return f()\n"},
      {"ZeroDivisionError", "def f():\n    return 1 // 0\n"},
      {"SyntaxError", "def f()\n    return 1\n"},
      {"IndentationError", "def f():\nreturn 1\n"},
      {"NameError", "def f():\n    return y\n"},
      {"AttributeError", "def f():\n    return [1].size\n"},
      {"TypeError", "def f():\n    return len(5)\n"},
      {"IndexError", "def f():\n    return 'ab'[5]\n"},
      {"UnboundLocalError", "def f():\n    total += 1\n    total = 0\n    return total\n"},
      {"OverflowError", "def f():\n    x = 3\n    for i in range(7):\n        x = x * x\n    return x\n"},
      {"RuntimeError", "def f():\n    raise RuntimeError('stop')\n"},
  };
  return s;
}

}  // namespace

TEST_CASE("request and response codec") {
  auto req = request("def f(x): return x", "f", {parse_literal("(1, 2.5)"), parse_literal("{3}"), Value(0.1 + 0.2)});
  req.id = "q7";
  req.trace_nodes = {"f"};
  auto j = encode_request(req);
  CHECK(j["call_args"] == Json::array({"(1, 2.5)", "{3}", "0.30000000000000004"}));
  auto back = decode_request(j);
  CHECK(back.id == "q7");
  CHECK(back.entry_point == "f");
  CHECK(back.call_args.size() == 3);
  CHECK(back.call_args[2].repr() == "0.30000000000000004");
  CHECK(back.trace_nodes == req.trace_nodes);

  CHECK_THROWS_AS(decode_request(Json{{"id", "x"}}), std::invalid_argument);
  CHECK_THROWS_AS(decode_request(Json::array()), std::invalid_argument);

  ExecResponse resp;
  resp.id = "q7";
  resp.status = Status::Exception;
  resp.exception_type = "NameError";
  resp.traces = {{"f", "3"}};
  auto r2 = decode_response(encode_response(resp));
  CHECK(r2.status == Status::Exception);
  CHECK(r2.exception_type == "NameError");
  CHECK(r2.traces.at("f") == "3");
  CHECK_THROWS_AS(decode_response(Json{{"id", "a"}, {"status", "ok"}}), std::invalid_argument);
  CHECK_THROWS_AS(decode_response(Json{{"id", "a"}, {"status", "exception"}}), std::invalid_argument);
  CHECK_THROWS_AS(decode_response(Json{{"id", "a"}, {"status", "exploded"}}), std::invalid_argument);
  for (auto s : {Status::Ok, Status::Exception, Status::Timeout, Status::CompileError, Status::MalformedRequest}) {
    CHECK(parse_exec_status(to_string(s)) == s);
  }
}

TEST_CASE("builtin sandbox basics") {
  BuiltinSandbox box;
  auto ok = box.run(request("def f(x): return x+1", "f", {Value(1)}));
  CHECK(ok.status == Status::Ok);
  CHECK(ok.value_repr == "2");
  auto err = box.run(request("def f(x): return y", "f", {Value(1)}));
  CHECK(err.status == Status::Exception);
  CHECK(err.exception_type == "NameError");
  auto root = box.run(request("import math\ndef f(x):\n    return math.sqrt(x)\n", "f", {Value(15)}));
  CHECK(root.value_repr == "3.872983346207417");
  CHECK(parse_literal(root.value_repr).repr() == root.value_repr);
}

TEST_CASE("serve loop correlates responses and survives malformed lines") {
  auto good = [](const std::string &id, int x) {
    auto r = request("def f(x): return x * 3", "f", {Value(x)});
    r.id = id;
    return encode_request(r).dump() + "\n";
  };
  int code = -1;
  auto lines = serve(good("a", 1) + "{not json\n" + good("b", 2) + "{\"id\": \"c\"}\n" + good("d", 3), &code);
  CHECK(code == 0);
  REQUIRE(lines.size() == 5);
  std::vector<ExecResponse> rs;
  for (const auto &l : lines) rs.push_back(decode_response(Json::parse(l)));
  CHECK(rs[0].id == "a");
  CHECK(rs[0].value_repr == "3");
  CHECK(rs[1].status == Status::MalformedRequest);
  CHECK(rs[2].id == "b");
  CHECK(rs[2].value_repr == "6");
  CHECK(rs[3].status == Status::MalformedRequest);
  CHECK(rs[3].id == "c");
  CHECK(rs[4].value_repr == "9");
}

TEST_CASE("each error class round-trips through the protocol") {
  std::string input;
  for (std::size_t i = 0; i < class_snippets().size(); ++i) {
    auto r = request(class_snippets()[i].second, "f");
    r.id = "e" + std::to_string(i);
    input += encode_request(r).dump() + "\n";
  }
  auto lines = serve(input);
  REQUIRE(lines.size() == class_snippets().size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto r = decode_response(Json::parse(lines[i]));
    CAPTURE(class_snippets()[i].first);
    CHECK(r.id == "e" + std::to_string(i));
    CHECK(r.exception_type == class_snippets()[i].first);
    bool compile = class_snippets()[i].first == "SyntaxError" || class_snippets()[i].first == "IndentationError";
    CHECK(r.status == (compile ? Status::CompileError : Status::Exception));
  }
}

TEST_CASE("worker pool runs requests in subprocesses") {
  auto p = pool("serve", 3);
  std::vector<ExecRequest> reqs;
  for (int i = 0; i < 12; ++i) reqs.push_back(request("def f(x):\n    return [x] * 2\n", "f", {Value(i)}));
  auto out = p.run_batch(reqs);
  REQUIRE(out.size() == 12);
  for (int i = 0; i < 12; ++i) CHECK(out[static_cast<std::size_t>(i)].value_repr == "[" + std::to_string(i) + ", " + std::to_string(i) + "]");
  CHECK(p.spawned() <= 3);

  auto err = p.run(request(class_snippets()[6].second, "f"));
  CHECK(err.exception_type == "NameError");
}

TEST_CASE("worker pool kills runaway workers at the deadline") {
  auto p = pool("serve");
  CHECK(p.run(request("def f():\n    return 1\n", "f")).ok());
  auto start = std::chrono::steady_clock::now();
  auto r = p.run(request("def f():\n    while True:\n        pass\n", "f", {}, 1.0));
  auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(r.status == Status::Timeout);
  CHECK(elapsed >= std::chrono::milliseconds(1000));
  CHECK(elapsed < std::chrono::milliseconds(1500 + 1000));
  auto after = p.run(request("def f():\n    return 'alive'\n", "f"));
  CHECK(after.value_repr == "'alive'");
  CHECK(p.spawned() == 2);
}

TEST_CASE("worker state does not leak between requests") {
  auto p = pool("serve");
  const std::string probe = "def f():\n    return counter\n";
  auto first = p.run(request(probe, "f"));
  auto polluter = p.run(request("counter = 41\ndef f():\n    global_value = counter + 1\n    return global_value\n", "f"));
  CHECK(polluter.value_repr == "42");
  auto second = p.run(request(probe, "f"));
  CHECK(first.status == Status::Exception);
  CHECK(second.status == first.status);
  CHECK(second.exception_type == first.exception_type);
  CHECK(second.value_repr == first.value_repr);
  CHECK(p.spawned() == 1);
}

TEST_CASE("broken workers surface as an unavailable sandbox") {
  for (const char *mode : {"garbage", "wrong-id", "exit"}) {
    CAPTURE(mode);
    auto p = pool(mode);
    CHECK_THROWS_AS(p.run(request("def f():\n    return 1\n", "f")), SandboxUnavailable);
    CHECK(p.spawned() == 2);
  }
  WorkerPoolOptions missing;
  missing.command = {"/nonexistent/worker"};
  WorkerPoolSandbox p(missing);
  CHECK_THROWS_AS(p.run(request("def f():\n    return 1\n", "f")), SandboxUnavailable);
  CHECK_THROWS_AS(WorkerPoolSandbox(WorkerPoolOptions{}), std::invalid_argument);
}
