#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <thread>

#include "callforge/eval.hpp"
#include "callforge/oracle.hpp"
#include "support.hpp"

using namespace callforge;

namespace {

std::vector<NestedProblem> small_benchmark() {
  auto bank = callforge::testing::classified_fixture_bank();
  GenerationRequest req;
  req.count = 2;
  req.master_seed = 5;
  req.graph_ids = {"G1", "G5", "G9", "G13"};
  auto bench = generate_drafts(bank, req);
  BuiltinSandbox sandbox;
  run_oracle(bench, bank, sandbox);
  return bench;
}

// Local chat endpoint answering from a script of (status, body) replies.
class ScriptedServer {
 public:
  explicit ScriptedServer(std::vector<std::pair<int, std::string>> script) : script_(std::move(script)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request &req, httplib::Response &res) {
      std::lock_guard<std::mutex> lock(mu_);
      auth_.push_back(req.get_header_value("Authorization"));
      bodies_.push_back(req.body);
      auto [status, body] = script_[std::min(hits_, script_.size() - 1)];
      ++hits_;
      res.status = status;
      if (status == 429) res.set_header("Retry-After", "0");
      res.set_content(body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ScriptedServer() {
    server_.stop();
    thread_.join();
  }

  [[nodiscard]] std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }
  std::size_t hits() {
    std::lock_guard<std::mutex> lock(mu_);
    return hits_;
  }
  std::string auth(std::size_t i) {
    std::lock_guard<std::mutex> lock(mu_);
    return auth_.at(i);
  }
  std::string body(std::size_t i) {
    std::lock_guard<std::mutex> lock(mu_);
    return bodies_.at(i);
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_{0};
  std::mutex mu_;
  std::vector<std::pair<int, std::string>> script_;
  std::vector<std::string> auth_, bodies_;
  std::size_t hits_{0};
};

ModelConfig local_config(const std::string &endpoint) {
  ModelConfig cfg;
  cfg.endpoint = endpoint;
  cfg.model = "test-model";
  cfg.request_timeout = std::chrono::milliseconds(2000);
  cfg.api_key_env = "CALLFORGE_TEST_KEY";
  return cfg;
}

struct SleepLog {
  std::vector<std::chrono::milliseconds> waits;
  Sleeper sleeper() {
    return [this](std::chrono::milliseconds d) { waits.push_back(d); };
  }
};

}  // namespace

TEST_CASE("pass at k values") {
  CHECK(pass_at_k(1, 1, 1) == 1.0);
  CHECK(pass_at_k(5, 0, 3) == 0.0);
  CHECK(pass_at_k(5, 2, 3) == 0.9);
  CHECK(pass_at_k(10, 3, 1) == doctest::Approx(0.3));
  CHECK_THROWS_AS(pass_at_k(5, 6, 1), std::invalid_argument);
  CHECK_THROWS_AS(pass_at_k(5, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(pass_at_k(5, 1, 6), std::invalid_argument);
  CHECK_THROWS_AS(pass_at_k(0, 0, 1), std::invalid_argument);
}

TEST_CASE("pass at k is monotone and bounded") {
  for (int n = 1; n <= 8; ++n) {
    for (int k = 1; k <= n; ++k) {
      CHECK(pass_at_k(n, n, k) == 1.0);
      CHECK(pass_at_k(n, 0, k) == 0.0);
      for (int c = 0; c <= n; ++c) {
        double v = pass_at_k(n, c, k);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        if (c > 0) CHECK(v >= pass_at_k(n, c - 1, k));
        if (k > 1) CHECK(v >= pass_at_k(n, c, k - 1));
      }
      CHECK(pass_at_k(n, 1, 1) == doctest::Approx(1.0 / n));
    }
  }
}

TEST_CASE("error taxonomy") {
  CHECK(error_taxonomy().size() == 13);
  CHECK(classify_error("AssertionError") == AbilityCategory::ProblemUnderstanding);
  CHECK(classify_error("IndexError") == AbilityCategory::ContextManagement);
  CHECK(classify_error("OverflowError") == AbilityCategory::Other);
  CHECK(classify_error("SyntaxError") == AbilityCategory::CodePatternGeneration);
  CHECK(classify_error("KeyError") == AbilityCategory::Other);
  CHECK(classify_error("") == AbilityCategory::Other);
  std::map<AbilityCategory, int> counts;
  for (const auto &[name, cat] : error_taxonomy()) {
    for (int i = 0; i < 10; ++i) ++counts[classify_error(name)];
  }
  CHECK(counts[AbilityCategory::ProblemUnderstanding] == 40);
  CHECK(counts[AbilityCategory::CodePatternGeneration] == 20);
  CHECK(counts[AbilityCategory::ContextManagement] == 50);
  CHECK(counts[AbilityCategory::Other] == 20);
  for (auto c : {AbilityCategory::ProblemUnderstanding, AbilityCategory::Other}) CHECK(parse_ability(to_string(c)) == c);
}

TEST_CASE("code extraction") {
  CHECK(extract_code("Sure:\n```python\ndef f(x):\n    return x\n```\nDone.") == "def f(x):\n    return x\n");
  CHECK(extract_code("```\ndef a():\n    return 1\n```\n```python\ndef b():\n    return 2\n```") ==
        "def a():\n    return 1\n");
  CHECK(extract_code("def f(x):\n    return x\n") == "def f(x):\n    return x\n");
  CHECK(extract_code("I think this is hard.\nSorry about that.") == std::nullopt);
  CHECK(extract_code("") == std::nullopt);
  auto mixed = extract_code("Here you go\ndef f(x):\n    return x + 1\n\ndef g(y):\n    return f(y)\nThat is all.");
  REQUIRE(mixed);
  CHECK(mixed->find("def g(y)") != std::string::npos);
  CHECK(mixed->find("That is all") == std::string::npos);
  CHECK(extract_code("```python\ndef f(:\n```") == "def f(:\n");
}

TEST_CASE("grading closure on generated problems") {
  auto bench = small_benchmark();
  BuiltinSandbox sandbox(2);
  std::size_t valid = 0;
  for (const auto &np : bench) {
    if (np.verdict.status != GenerationVerdict::Status::Valid) continue;
    ++valid;
    auto ok = grade(np.reference_source, np, sandbox);
    CHECK_MESSAGE(ok.solved, np.id);
    CHECK(!ok.ability);

    auto broken = grade(extract_code("```python\n" + syntax_mutant(np.reference_source) + "```"), np, sandbox);
    CHECK(!broken.solved);
    CHECK(broken.first_error == "SyntaxError");
    CHECK(broken.ability == AbilityCategory::CodePatternGeneration);

    auto wrong = grade(wrong_constant_mutant(np.reference_source), np, sandbox);
    CHECK(!wrong.solved);
    CHECK(wrong.first_error == "AssertionError");
    CHECK(wrong.ability == AbilityCategory::ProblemUnderstanding);

    auto prose = grade(extract_code("No code from me."), np, sandbox);
    CHECK(!prose.solved);
    CHECK(prose.first_error == "SyntaxError");
    CHECK(prose.ability == AbilityCategory::CodePatternGeneration);
  }
  CHECK(valid > 10);
}

TEST_CASE("grading tolerance and runtime errors") {
  NestedProblem np;
  np.id = "float";
  np.testcases = {{{Value(2.0)}, "1.4142135623730951"}};
  BuiltinSandbox sandbox;
  auto src = [](const std::string &body) { return "import math\n\ndef main(x):\n" + body; };
  CHECK(grade(src("    return math.sqrt(x) + 1e-9\n"), np, sandbox).solved);
  CHECK(!grade(src("    return math.sqrt(x) + 1e-3\n"), np, sandbox).solved);
  auto idx = grade(src("    return [1][3]\n"), np, sandbox);
  CHECK(idx.first_error == "IndexError");
  CHECK(idx.ability == AbilityCategory::ContextManagement);
  auto name = grade(src("    return y\n"), np, sandbox);
  CHECK(name.ability == AbilityCategory::ContextManagement);
  auto loop = grade(src("    while True:\n        x += 1\n"), np, sandbox, 0.2);
  REQUIRE(loop.outcomes.size() == 1);
  CHECK(loop.outcomes[0].kind == CaseOutcome::Kind::Timeout);
  CHECK(loop.ability == AbilityCategory::Other);
  auto indent = grade(std::string("def main(x):\nreturn x\n"), np, sandbox);
  CHECK(indent.first_error == "IndentationError");
  CHECK(indent.ability == AbilityCategory::CodePatternGeneration);

  np.testcases = {{{Value(1)}, "[1, 2]"}, {{Value(2)}, "(1, 'a')"}};
  auto structural = grade(std::string("def main(x):\n    if x == 1:\n        return [1, 2]\n    return (1, 'a')\n"), np, sandbox);
  CHECK(structural.solved);
  auto partial = grade(std::string("def main(x):\n    return [1, 2]\n"), np, sandbox);
  CHECK(!partial.solved);
  CHECK(partial.outcomes[0].kind == CaseOutcome::Kind::Pass);
  CHECK(partial.outcomes[1].kind == CaseOutcome::Kind::Fail);
}

TEST_CASE("mock transport echoes canned completions") {
  auto mock = std::make_shared<MockModelTransport>([](const std::string &p) { return "echo: " + p; });
  ChatClient client(ModelConfig{}, mock);
  auto q = client.query("hello");
  CHECK(q.ok());
  CHECK(q.completion == "echo: hello");
  CHECK(q.retries == 0);
  CHECK(mock->calls() == 1);
  Json body = Json::parse(client.request_body("hi"));
  CHECK(body["temperature"] == 0.0);
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == "hi");
}

TEST_CASE("client retries rate limits then succeeds") {
  ScriptedServer server({{429, "{}"}, {429, "{}"}, {200, completion_body("def main(x):\n    return x\n")}});
  ::setenv("CALLFORGE_TEST_KEY", "secret-token", 1);
  SleepLog log;
  ChatClient client(local_config(server.endpoint()), make_http_transport(local_config(server.endpoint())), log.sleeper());
  auto q = client.query("prompt text");
  CHECK(q.ok());
  CHECK(q.retries == 2);
  REQUIRE(q.attempts.size() == 3);
  CHECK(q.attempts[0].http_status == 429);
  CHECK(q.attempts[2].http_status == 200);
  CHECK(q.completion == "def main(x):\n    return x\n");
  CHECK(server.hits() == 3);
  CHECK(server.auth(0) == "Bearer secret-token");
  CHECK(prompt_of_request(server.body(0)) == "prompt text");
  CHECK(log.waits.size() == 2);
  ::unsetenv("CALLFORGE_TEST_KEY");
}

TEST_CASE("client surfaces auth, rate limit and bad responses distinctly") {
  SleepLog log;
  {
    ScriptedServer server({{401, "{\"error\": \"bad key\"}"}});
    ChatClient client(local_config(server.endpoint()), make_http_transport(local_config(server.endpoint())), log.sleeper());
    auto q = client.query("x");
    CHECK(q.status == QueryResult::Status::AuthError);
    CHECK(server.hits() == 1);
  }
  {
    ScriptedServer server({{429, "{}"}});
    auto cfg = local_config(server.endpoint());
    cfg.retry.max_retries = 2;
    ChatClient client(cfg, make_http_transport(cfg), log.sleeper());
    auto q = client.query("x");
    CHECK(q.status == QueryResult::Status::RateLimited);
    CHECK(q.retries == 2);
    CHECK(server.hits() == 3);
  }
  {
    ScriptedServer server({{200, "not json"}});
    ChatClient client(local_config(server.endpoint()), make_http_transport(local_config(server.endpoint())), log.sleeper());
    CHECK(client.query("x").status == QueryResult::Status::BadResponse);
  }
  {
    ScriptedServer server({{503, "{}"}, {200, completion_body("ok")}});
    ChatClient client(local_config(server.endpoint()), make_http_transport(local_config(server.endpoint())), log.sleeper());
    auto q = client.query("x");
    CHECK(q.ok());
    CHECK(q.retries == 1);
  }
}

TEST_CASE("backoff grows geometrically up to the cap") {
  struct Busy : ModelTransport {
    HttpReply post(const std::string &) override { return HttpReply{503, "", "", std::nullopt}; }
  };
  ModelConfig cfg;
  cfg.retry.max_retries = 6;
  cfg.retry.initial_backoff = std::chrono::milliseconds(500);
  cfg.retry.max_backoff = std::chrono::milliseconds(4000);
  SleepLog log;
  ChatClient client(cfg, std::make_shared<Busy>(), log.sleeper());
  auto q = client.query("x");
  CHECK(q.status == QueryResult::Status::TransportError);
  std::vector<long> waits;
  for (auto w : log.waits) waits.push_back(static_cast<long>(w.count()));
  CHECK(waits == std::vector<long>{500, 1000, 2000, 4000, 4000, 4000});
}

TEST_CASE("unreachable endpoint leaves problems unevaluated") {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto cfg = local_config("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions");
  cfg.retry.max_retries = 2;
  SleepLog log;
  ChatClient client(cfg, make_http_transport(cfg), log.sleeper());
  auto q = client.query("x");
  CHECK(q.status == QueryResult::Status::TransportError);
  CHECK(q.retries == 2);
  CHECK(!q.error.empty());

  auto bench = small_benchmark();
  bench.resize(3);
  for (auto &np : bench) np.verdict.status = GenerationVerdict::Status::Valid;
  BuiltinSandbox sandbox;
  EvalOptions opts;
  opts.concurrency = 1;
  auto results = run_eval(bench, client, sandbox, opts);
  REQUIRE(results.size() == 3);
  for (const auto &r : results) {
    CHECK(!r.evaluated);
    CHECK(!r.solved);
    CHECK(!r.ability);
    CHECK(r.transport_status == "transport_error");
  }
}

TEST_CASE("evaluation runs are keyed by problem and sample") {
  auto bench = small_benchmark();
  BuiltinSandbox sandbox(2);
  auto mock = std::make_shared<MockModelTransport>(reference_responder(bench, MockBehavior::Reference));
  ChatClient client(ModelConfig{}, mock);
  EvalOptions opts;
  opts.samples = 3;
  opts.concurrency = 4;
  auto results = run_eval(bench, client, sandbox, opts);
  std::vector<const NestedProblem *> valid;
  for (const auto &np : bench) {
    if (np.verdict.status == GenerationVerdict::Status::Valid) valid.push_back(&np);
  }
  REQUIRE(results.size() == valid.size() * 3);
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(results[i].problem_id == valid[i / 3]->id);
    CHECK(results[i].sample == static_cast<int>(i % 3));
    CHECK(results[i].solved);
  }
  CHECK(mock->calls() == results.size());

  Json j = eval_result_to_json(results[0]);
  CHECK(eval_result_to_json(eval_result_from_json(j)).dump() == j.dump());
  CHECK_THROWS_AS(eval_result_from_json(Json::parse("{}")), std::invalid_argument);
}

TEST_CASE("coin responder is deterministic per problem") {
  auto bench = small_benchmark();
  auto a = coin_responder(bench, {{1, 0.5}, {2, 0.5}, {3, 0.5}, {4, 0.5}}, 7);
  auto b = coin_responder(bench, {{1, 0.5}, {2, 0.5}, {3, 0.5}, {4, 0.5}}, 7);
  auto none = coin_responder(bench, {}, 7);
  for (const auto &np : bench) {
    if (np.rendered_prompt.empty()) continue;
    CHECK(a(np.rendered_prompt) == b(np.rendered_prompt));
    CHECK(none(np.rendered_prompt).find("__wrong_constant__") != std::string::npos);
  }
}
