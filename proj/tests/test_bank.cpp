#include <doctest.h>

#include "callforge/problem_bank.hpp"
#include "callforge/sandbox.hpp"
#include "support.hpp"

using namespace callforge;

namespace {

std::string record(const std::string &id, const std::string &entry, const std::string &solution,
                   const std::string &examples) {
  Json j = {{"id", id}, {"prompt", "Do " + id + "."}, {"solution", solution}, {"entry_point", entry}};
  j["examples"] = Json::parse(examples);
  return j.dump() + "\n";
}

const std::string kAddOne = "def add_one(n):\n    return n + 1\n";

}  // namespace

TEST_CASE("ingest accepts well-formed records") {
  std::string text = record("a", "add_one", kAddOne, R"([{"args": [1], "out": 2}])") +
                     record("b", "add_one", kAddOne, R"([{"args": [3], "out": 4}])") +
                     record("c", "add_one", kAddOne, R"([{"args": [5], "out": 6}])");
  auto res = ingest_bank_text(text, "inline");
  CHECK(res.bank.size() == 3);
  CHECK(res.rejections.empty());
  auto again = ingest_bank_text(text, "inline");
  CHECK(to_jsonl({problem_to_json(again.bank.problems[1])}) == to_jsonl({problem_to_json(res.bank.problems[1])}));
}

TEST_CASE("ingest reports invalid records with line numbers") {
  Json missing = {{"id", "m"}, {"prompt", "p"}, {"solution", kAddOne}, {"examples", Json::parse(R"([{"args": [1], "out": 2}])")}};
  auto res = ingest_bank_text(missing.dump() + "\n", "inline");
  CHECK(res.bank.size() == 0);
  REQUIRE(res.rejections.size() == 1);
  CHECK(res.rejections[0].line == 1);
  CHECK(res.rejections[0].reason.find("entry_point") != std::string::npos);

  std::string dup = record("a", "add_one", kAddOne, R"([{"args": [1], "out": 2}])") +
                    record("b", "add_one", kAddOne, R"([{"args": [1], "out": 2}])") +
                    record("a", "add_one", kAddOne, R"([{"args": [1], "out": 2}])");
  res = ingest_bank_text(dup, "inline");
  CHECK(res.bank.size() == 2);
  REQUIRE(res.rejections.size() == 1);
  CHECK(res.rejections[0].line == 3);
  CHECK(res.rejections[0].id == "a");
  CHECK(res.rejections[0].reason.find("duplicate") != std::string::npos);

  std::string bad = "not json\n" + record("x", "nope", kAddOne, R"([{"args": [1], "out": 2}])") +
                    record("y", "add_one", kAddOne, R"([])") +
                    record("z", "add_one", kAddOne, R"([{"args": [1, 2], "out": 2}])") +
                    record("w", "add_one", "def add_one(n):\n    return n +\n", R"([{"args": [1], "out": 2}])");
  res = ingest_bank_text(bad, "inline");
  CHECK(res.bank.size() == 0);
  REQUIRE(res.rejections.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(res.rejections[static_cast<std::size_t>(i)].line == i + 1);
  CHECK_THROWS_AS(ingest_bank("/nonexistent/bank.jsonl"), BankError);
}

TEST_CASE("signature inference reads runtime types") {
  BuiltinSandbox sandbox;
  auto bank = ingest_bank_text(
                  record("inc", "add_one", kAddOne, R"([{"args": [1], "out": 2}])") +
                      record("fib", "fib",
                             "def fib(n):\n    out = []\n    a, b = 0, 1\n    for _ in range(n):\n        out.append(a)\n"
                             "        a, b = b, a + b\n    return out\n",
                             R"([{"args": [5], "out": [0, 1, 1, 2, 3]}, {"args": [0], "out": []}])") +
                      record("uniq", "uniq", "def uniq(xs):\n    return set(xs)\n", R"([{"args": [[1, 1]], "out": [1]}])") +
                      record("flip", "flip", "def flip(x):\n    if x:\n        return 'a'\n    return 1\n",
                             R"([{"args": [true], "out": "a"}, {"args": [false], "out": 1}])") +
                      record("wrong", "add_one", kAddOne, R"([{"args": [1], "out": 5}])") +
                      record("empty", "e", "def e(n):\n    return []\n", R"([{"args": [1], "out": []}])"),
                  "inline")
                  .bank;
  REQUIRE(bank.size() == 6);
  auto sig = [&](const char *id) { return infer_signature(*bank.find(id), sandbox); };
  CHECK(sig("inc").signature->to_string() == "(int) -> int");
  CHECK(sig("fib").signature->to_string() == "(int) -> list[int]");
  CHECK(sig("uniq").status == SignatureResult::Status::Unsupported);
  CHECK(sig("flip").status == SignatureResult::Status::Disagreement);
  CHECK(sig("wrong").status == SignatureResult::Status::OutputMismatch);
  CHECK(sig("empty").status == SignatureResult::Status::Unsupported);

  infer_signatures(bank, sandbox);
  CHECK(bank.find("inc")->eligible);
  CHECK(bank.find("fib")->eligible);
  CHECK(!bank.find("uniq")->eligible);
  CHECK(!bank.find("uniq")->ineligible_reason.empty());
  CHECK(sig("fib").signature == bank.find("fib")->signature);
}

TEST_CASE("fixture bank classification") {
  auto bank = callforge::testing::classified_fixture_bank();
  std::map<int, int> per_unit;
  for (const auto &p : bank.problems) {
    REQUIRE_MESSAGE(p.eligible, p.id << ": " << p.ineligible_reason);
    REQUIRE(p.unit);
    ++per_unit[p.unit->index];
    BuiltinSandbox sandbox;
    for (const auto &ex : p.examples) {
      ExecRequest req;
      req.id = p.id;
      req.source = p.solution_source;
      req.entry_point = p.entry_point;
      req.call_args = ex.args;
      CHECK(sandbox.run(req).ok());
    }
  }
  CHECK(per_unit.size() == 4);
  CHECK(bank.find("fib")->nu == 2);
  CHECK(bank.find("primes")->unit->index == 3);

  auto path = std::filesystem::temp_directory_path() / "callforge_bank_roundtrip.jsonl";
  write_bank(path, bank);
  auto back = ingest_bank(path);
  CHECK(back.rejections.empty());
  REQUIRE(back.bank.size() == bank.size());
  CHECK(back.bank.find("sqrt")->signature == bank.find("sqrt")->signature);
  CHECK(back.bank.find("sqrt")->unit == bank.find("sqrt")->unit);
  std::filesystem::remove(path);
}
