#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <set>

#include "callforge/composer.hpp"
#include "callforge/interpreter.hpp"
#include "callforge/oracle.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace callforge;
using callforge::testing::stub;
using callforge::testing::brute_force;
using callforge::testing::four_problem_bank;
using callforge::testing::random_bank;

namespace {

const TypeTag I = TypeTag::Int;
const TypeTag L = TypeTag::ListInt;
const TypeTag S = TypeTag::Str;

ProblemBank bank_of(std::vector<UnitProblem> ps) {
  ProblemBank b;
  b.problems = std::move(ps);
  return b;
}

std::set<std::vector<std::string>> enumerate_space(const AssignmentSpace &space) {
  std::set<std::vector<std::string>> out;
  auto it = space.iterate();
  Assignment a;
  while (it.next(a)) out.insert(a.mapping);
  return out;
}

}  // namespace

TEST_CASE("four-problem fixture on a 2-node chain gives the eight listed pairs") {
  auto bank = four_problem_bank();
  const CallGraph &g1 = *find_graph("G1");
  AssignmentSpace space(g1, bank, UnitId{1});
  CHECK(space.count() == 8);
  std::set<std::vector<std::string>> expected = {{"A", "B"}, {"A", "D"}, {"B", "C"}, {"C", "A"},
                                                 {"C", "B"}, {"C", "D"}, {"D", "A"}, {"D", "B"}};
  CHECK(enumerate_space(space) == expected);
  CHECK(brute_force(g1, bank, 1) == expected);

  AssignmentSpace chain3(*find_graph("G2"), bank, UnitId{1});
  CHECK(chain3.count() == brute_force(*find_graph("G2"), bank, 1).size());
}

TEST_CASE("no type matches means an empty space") {
  auto bank = bank_of({stub("A", {I}, L), stub("B", {I}, S)});
  for (const auto &g : catalog()) {
    if (g.node_count < 2) continue;
    AssignmentSpace space(g, bank, UnitId{1});
    CHECK(space.count() == 0);
    CHECK_THROWS_AS((void)space.sample(1), NoValidAssignment);
    CHECK(space.sample_indices(1, 10).empty());
  }
}

TEST_CASE("counting agrees with brute force on small banks and graphs") {
  auto start = std::chrono::steady_clock::now();
  std::vector<CallGraph> graphs;
  for (const auto &g : catalog()) {
    if (g.node_count <= 4) graphs.push_back(g);
  }
  CallGraph single;
  single.id = "single";
  single.node_count = 1;
  graphs.push_back(single);
  REQUIRE(graphs.size() >= 9);

  std::size_t pairs = 0;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    auto bank = seed == 1 ? four_problem_bank() : random_bank(seed);
    REQUIRE(bank.size() <= 8);
    for (const auto &g : graphs) {
      for (int unit = 1; unit <= 2; ++unit) {
        auto expected = brute_force(g, bank, unit);
        AssignmentSpace space(g, bank, UnitId{unit});
        REQUIRE_MESSAGE(space.count() == expected.size(), g.id << " seed " << seed << " unit " << unit);
        CHECK(enumerate_space(space) == expected);
        std::set<std::vector<std::string>> lib;
        for (const auto &a : brute_force_assignments(g, bank, UnitId{unit})) lib.insert(a.mapping);
        CHECK(lib == expected);
        std::set<std::vector<std::string>> ranked;
        for (std::uint64_t i = 0; i < space.count(); ++i) {
          auto a = space.unrank(i);
          CHECK(check_assignment(g, bank, a, UnitId{unit}).empty());
          ranked.insert(a.mapping);
        }
        CHECK(ranked == expected);
        ++pairs;
      }
    }
  }
  CHECK(pairs >= 500);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(30));
}

TEST_CASE("sampling is seeded, uniform in support and distinct") {
  auto bank = four_problem_bank();
  AssignmentSpace space(*find_graph("G1"), bank, UnitId{1});
  CHECK(space.sample(42) == space.sample(42));
  std::set<std::vector<std::string>> seen;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto a = space.sample(s);
    CHECK(check_assignment(*find_graph("G1"), bank, a, UnitId{1}).empty());
    seen.insert(a.mapping);
  }
  CHECK(seen.size() > 1);

  auto idx = space.sample_indices(7, 5);
  CHECK(idx.size() == 5);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  CHECK(std::set<std::uint64_t>(idx.begin(), idx.end()).size() == 5);
  CHECK(space.sample_indices(7, 5) == idx);
  CHECK(space.sample_indices(7, 50).size() == 8);

  auto lone = bank_of({stub("A", {I}, L), stub("B", {L}, S)});
  AssignmentSpace one(*find_graph("G1"), lone, UnitId{1});
  REQUIRE(one.count() == 1);
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(one.sample(s).mapping == std::vector<std::string>{"A", "B"});
}

TEST_CASE("cell seeds differ across units and graphs") {
  CHECK(cell_seed(1, UnitId{1}, "G1") == cell_seed(1, UnitId{1}, "G1"));
  CHECK(cell_seed(1, UnitId{1}, "G1") != cell_seed(1, UnitId{2}, "G1"));
  CHECK(cell_seed(1, UnitId{1}, "G1") != cell_seed(1, UnitId{1}, "G2"));
  CHECK(cell_seed(1, UnitId{1}, "G1") != cell_seed(2, UnitId{1}, "G1"));
}

TEST_CASE("worked fibonacci chain round trip") {
  auto bank = callforge::testing::fibonacci_chain_bank();
  const CallGraph &g8 = *find_graph("G8");
  Assignment a{"G8", {"fib", "squares", "sumlist", "sqrt", "isint"}};
  REQUIRE(check_assignment(g8, bank, a, UnitId{1}).empty());
  std::vector<NestedProblem> v{make_draft(g8, bank, a, UnitId{1}, LevelThresholds())};
  BuiltinSandbox sandbox;
  REQUIRE(run_oracle(v, bank, sandbox) == 1);
  const auto &np = v[0];
  CHECK(np.rendered_prompt == callforge::testing::worked_example_prompt());
  REQUIRE(!np.testcases.empty());
  CHECK(np.testcases[0].expected_repr == "False");
  auto out = execute_python(np.reference_source, "main", {Value(5)});
  REQUIRE(out.status == ExecOutcome::Status::Ok);
  CHECK(out.value.repr() == "False");
  auto direct = execute_python(np.reference_source + "\ndef direct(n):\n    return is_integer(square_root(sum_numbers("
                                                     "square_numbers(generate_fibonacci(n)))))\n",
                               "direct", {Value(5)});
  CHECK(direct.value.repr() == out.value.repr());
}

TEST_CASE("two-node chain prompt structure") {
  auto bank = callforge::testing::classified_fixture_bank();
  Assignment a{"G1", {"double", "inc"}};
  std::vector<NestedProblem> v{make_draft(*find_graph("G1"), bank, a, UnitId{1}, LevelThresholds())};
  BuiltinSandbox sandbox;
  REQUIRE(run_oracle(v, bank, sandbox) == 1);
  const auto &p = v[0].rendered_prompt;
  auto occurrences = [&](const std::string &what) {
    std::size_t n = 0;
    for (auto pos = p.find(what); pos != std::string::npos; pos = p.find(what, pos + 1)) ++n;
    return n;
  };
  CHECK(occurrences("PROMPT 1:\n") == 1);
  CHECK(occurrences("PROMPT 2:\n") == 1);
  CHECK(occurrences("PROMPT 3:") == 0);
  CHECK(occurrences(" serves as the input of ") == 1);
  CHECK(occurrences("The main function returns") == 1);
  CHECK(p.find("assert add_one(6) == 7") != std::string::npos);
}

TEST_CASE("join node receives parents in node order") {
  // 0 -> 1 (x + 1), 0 -> 2 (x * 2), sub(1, 2) at the join.
  auto bank = bank_of({});
  auto add = [&](std::string id, std::string entry, std::string src, std::vector<TypeTag> in) {
    UnitProblem p = stub(id, in, I);
    p.entry_point = entry;
    p.solution_source = src;
    p.prompt = "Compute " + entry + ".";
    bank.problems.push_back(p);
  };
  add("r", "ident", "def ident(x):\n    return x\n", {I});
  add("l", "left", "def left(x):\n    return x + 1\n", {I});
  add("m", "right", "def right(x):\n    return x * 2\n", {I});
  add("j", "sub", "def sub(a, b):\n    return a - b * 100\n", {I, I});
  bank.problems[0].examples[0].args = {Value(5)};
  Assignment a{"G9", {"r", "l", "m", "j"}};
  REQUIRE(check_assignment(*find_graph("G9"), bank, a, UnitId{1}).empty());
  std::vector<NestedProblem> v{make_draft(*find_graph("G9"), bank, a, UnitId{1}, LevelThresholds())};
  BuiltinSandbox sandbox;
  REQUIRE(run_oracle(v, bank, sandbox) == 1);
  auto traced = trace_nodes(v[0], {Value(5)}, sandbox);
  CHECK(traced.at(1) == "6");
  CHECK(traced.at(2) == "10");
  CHECK(traced.at(3) == "-994");
  CHECK(v[0].rendered_prompt.find("The outputs of function PROMPT 2: left and PROMPT 3: right serve as the inputs of "
                                  "PROMPT 4: sub, in that order.") != std::string::npos);
}

TEST_CASE("clashing helper names are renamed in later nodes") {
  auto bank = bank_of({});
  auto add = [&](std::string id, std::string entry, std::string src) {
    UnitProblem p = stub(id, {I}, I);
    p.entry_point = entry;
    p.solution_source = src;
    bank.problems.push_back(p);
  };
  add("a", "first", "import math\nK = 2\n\ndef helper(x):\n    return x * K\n\ndef first(x):\n    return helper(x)\n");
  add("b", "second", "import math\nK = 3\n\ndef helper(x):\n    return x + K\n\ndef second(x):\n    return helper(x)\n");
  add("c", "helper", "def helper(x):\n    return x - 1\n");
  Assignment a{"G2", {"a", "b", "c"}};
  auto prog = assemble_reference_code(*find_graph("G2"), bank, a);
  CHECK(prog.node_functions[0] == "first");
  CHECK(prog.node_functions[1] == "second");
  CHECK(prog.node_functions[2] == "helper_n2");
  std::size_t imports = 0;
  for (auto pos = prog.source.find("import math"); pos != std::string::npos; pos = prog.source.find("import math", pos + 1)) {
    ++imports;
  }
  CHECK(imports == 1);
  auto out = execute_python(prog.source, "main", {Value(5)});
  REQUIRE_MESSAGE(out.status == ExecOutcome::Status::Ok, out.message << "\n" << prog.source);
  CHECK(out.value.repr() == "12");  // ((5 * 2) + 3) - 1
}

TEST_CASE("fan-out graphs return every sink") {
  auto bank = callforge::testing::classified_fixture_bank();
  Assignment a{"G5", {"double", "inc", "absval"}};
  auto prog = assemble_reference_code(*find_graph("G5"), bank, a);
  auto out = execute_python(prog.source, "main", {Value(-4)});
  REQUIRE(out.status == ExecOutcome::Status::Ok);
  CHECK(out.value.repr() == "(-7, 8)");
}

TEST_CASE("complexity matrix bucketing") {
  CHECK(bucket_matrix({}, 4, 4).count(1, 1) == 0);

  std::vector<UnitProblem> ps;
  for (int u = 1; u <= 4; ++u) {
    for (int i = 0; i < 10; ++i) ps.push_back(stub("u" + std::to_string(u) + "a" + std::to_string(i), {I}, I, u));
    for (int i = 0; i < 3; ++i) ps.push_back(stub("u" + std::to_string(u) + "b" + std::to_string(i), {I, I}, I, u));
    for (int i = 0; i < 3; ++i) ps.push_back(stub("u" + std::to_string(u) + "c" + std::to_string(i), {I, I, I}, I, u));
  }
  auto bank = bank_of(ps);
  GenerationRequest req;
  req.count = 100;
  req.master_seed = 9;
  auto drafts = generate_drafts(bank, req);
  CHECK(drafts.size() == 4 * 16 * 100);
  auto m = bucket_matrix(drafts, 4, 4);
  LevelThresholds betas;
  std::map<int, std::size_t> per_level;
  for (const auto &g : catalog()) ++per_level[classify_level(graph_features(g).metric, betas).index];
  for (int u = 1; u <= 4; ++u) {
    for (int l = 1; l <= 4; ++l) CHECK(m.count(u, l) == 100 * per_level[l]);
  }
  std::set<std::string> ids;
  for (const auto &d : drafts) ids.insert(d.id);
  CHECK(ids.size() == drafts.size());
  CHECK(generate_drafts(bank, req).front().reference_source == drafts.front().reference_source);
}

TEST_CASE("nested problem json round trip") {
  auto bank = callforge::testing::fibonacci_chain_bank();
  Assignment a{"G8", {"fib", "squares", "sumlist", "sqrt", "isint"}};
  std::vector<NestedProblem> v{make_draft(*find_graph("G8"), bank, a, UnitId{1}, LevelThresholds())};
  BuiltinSandbox sandbox;
  run_oracle(v, bank, sandbox);
  Json j = nested_to_json(v[0]);
  CHECK(nested_to_json(nested_from_json(j)).dump() == j.dump());
  CHECK_THROWS_AS(nested_from_json(Json::parse("{\"id\": 3}")), std::invalid_argument);
}
