#include <doctest.h>

#include <atomic>

#include "callforge/interpreter.hpp"
#include "callforge/oracle.hpp"
#include "support.hpp"

using namespace callforge;
using callforge::testing::stub;

namespace {

UnitProblem coded(const std::string &id, const std::string &entry, const std::string &src, std::vector<TypeTag> in,
                  TypeTag out, ValueList example = {Value(1)}) {
  UnitProblem p = stub(id, std::move(in), out);
  p.entry_point = entry;
  p.solution_source = src;
  p.prompt = "Write " + entry + ".\nassert " + entry + "(1) == 1";
  p.examples[0].args = std::move(example);
  return p;
}

NestedProblem draft(const ProblemBank &bank, const std::string &graph, std::vector<std::string> ids) {
  return make_draft(*find_graph(graph), bank, Assignment{graph, std::move(ids)}, UnitId{1}, LevelThresholds());
}

// Passes through to the reference interpreter, optionally corrupting replies.
class ScriptedSandbox : public ExecutionService {
 public:
  std::function<void(ExecResponse &, int)> tamper;
  std::atomic<int> calls{0};

  ExecResponse run(const ExecRequest &req) override {
    auto resp = inner_.run(req);
    int n = calls++;
    if (tamper) tamper(resp, n);
    return resp;
  }

 private:
  BuiltinSandbox inner_;
};

}  // namespace

TEST_CASE("oracle keeps valid chains and records traces") {
  auto bank = callforge::testing::fibonacci_chain_bank();
  auto np = draft(bank, "G8", {"fib", "squares", "sumlist", "sqrt", "isint"});
  BuiltinSandbox sandbox;
  auto res = generate_testcases(np, sandbox);
  REQUIRE(res.verdict.status == GenerationVerdict::Status::Valid);
  REQUIRE(res.testcases.size() == 2);
  CHECK(res.testcases[0].expected_repr == "False");
  CHECK(res.traced[0][3] == "3.872983346207417");
  for (std::size_t i = 0; i < res.testcases.size(); ++i) CHECK(res.traced[i][4] == res.testcases[i].expected_repr);
  auto traced = trace_nodes(np, {Value(5)}, sandbox);
  CHECK(traced.at(3) == "3.872983346207417");
  CHECK(traced.at(0) == "[0, 1, 1, 2, 3]");
}

TEST_CASE("identity chain traces the input unchanged") {
  ProblemBank bank;
  for (const char *id : {"i0", "i1", "i2"}) {
    bank.problems.push_back(coded(id, std::string("ident_") + id, std::string("def ident_") + id + "(x):\n    return x\n",
                                  {TypeTag::Int}, TypeTag::Int, {Value(7)}));
  }
  BuiltinSandbox sandbox;
  auto traced = trace_nodes(draft(bank, "G2", {"i0", "i1", "i2"}), {Value(7)}, sandbox);
  REQUIRE(traced.size() == 3);
  for (const auto &[node, v] : traced) CHECK(v == "7");
}

TEST_CASE("bad generations carry the failure reason") {
  ProblemBank bank;
  bank.problems.push_back(coded("zero", "to_zero", "def to_zero(x):\n    return x - x\n", {TypeTag::Int}, TypeTag::Int));
  bank.problems.push_back(coded("inv", "inverse", "def inverse(x):\n    return 10 // x\n", {TypeTag::Int}, TypeTag::Int));
  bank.problems.push_back(coded("spin", "spin", "def spin(x):\n    while True:\n        x += 1\n    return x\n",
                                {TypeTag::Int}, TypeTag::Int));
  bank.problems.push_back(coded("one", "one", "def one(x):\n    return 1\n", {TypeTag::Int}, TypeTag::Int));
  BuiltinSandbox sandbox;
  OracleOptions fast;
  fast.timeout_s = 0.2;

  auto res = generate_testcases(draft(bank, "G1", {"zero", "inv"}), sandbox, fast);
  CHECK(res.verdict.status == GenerationVerdict::Status::BadGeneration);
  CHECK(res.verdict.reason == "ZeroDivisionError");

  res = generate_testcases(draft(bank, "G1", {"one", "spin"}), sandbox, fast);
  CHECK(res.verdict.status == GenerationVerdict::Status::BadGeneration);
  CHECK(res.verdict.reason == "timeout");

  CHECK_THROWS_AS(trace_nodes(draft(bank, "G1", {"zero", "inv"}), {Value(1)}, sandbox), CompositionError);

  std::vector<NestedProblem> batch{draft(bank, "G1", {"zero", "inv"}), draft(bank, "G1", {"one", "inv"})};
  CHECK(run_oracle(batch, bank, sandbox, fast) == 1);
  CHECK(batch[0].rendered_prompt.empty());
  CHECK(!batch[1].rendered_prompt.empty());
  CHECK(batch[1].testcases[0].expected_repr == "10");
}

TEST_CASE("double run rejects unstable programs") {
  auto bank = callforge::testing::fibonacci_chain_bank();
  auto np = draft(bank, "G1", {"fib", "sumlist"});
  ScriptedSandbox unstable;
  unstable.tamper = [](ExecResponse &r, int n) {
    if (n % 2 == 1) r.value_repr += "0";
  };
  CHECK(generate_testcases(np, unstable).verdict.reason == "nondeterministic");

  ScriptedSandbox lossy;
  lossy.tamper = [](ExecResponse &r, int) { r.traces.erase("sum_numbers"); };
  CHECK(generate_testcases(np, lossy).verdict.reason == "node sum_numbers was never called");

  ScriptedSandbox down;
  down.tamper = [](ExecResponse &, int) { throw SandboxUnavailable("gone"); };
  CHECK_THROWS_AS(generate_testcases(np, down), SandboxUnavailable);
}

TEST_CASE("prompt assertions hold against the reference program") {
  auto bank = callforge::testing::classified_fixture_bank();
  GenerationRequest req;
  req.count = 3;
  req.master_seed = 11;
  req.graph_ids = {"G1", "G4", "G9", "G16"};
  auto bench = generate_drafts(bank, req);
  BuiltinSandbox sandbox;
  auto valid = run_oracle(bench, bank, sandbox);
  CHECK(valid > 10);
  for (const auto &np : bench) {
    if (np.verdict.status != GenerationVerdict::Status::Valid) continue;
    CHECK(!np.testcases.empty());
    std::string check = np.reference_source + "\n\ndef __check():\n";
    std::size_t asserts = 0;
    for (const auto &line : split(np.rendered_prompt, '\n')) {
      if (line.rfind("assert ", 0) == 0) {
        check += "    " + line + "\n";
        ++asserts;
      }
    }
    check += "    return True\n";
    CHECK(asserts == find_graph(np.graph_id)->node_count);
    auto out = execute_python(check, "__check", {});
    CHECK_MESSAGE(out.status == ExecOutcome::Status::Ok, np.id << ": " << out.exception_type << " " << out.message);
    for (std::size_t i = 0; i < np.testcases.size(); ++i) {
      auto again = execute_python(np.reference_source, "main", np.testcases[i].root_input);
      CHECK(again.value.repr() == np.testcases[i].expected_repr);
    }
  }
}
