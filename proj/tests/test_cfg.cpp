#include <doctest.h>

#include <chrono>

#include "callforge/cfg.hpp"
#include "callforge/util.hpp"
#include "oracles.hpp"

using callforge::testing::FunctionGen;

using namespace callforge;

TEST_CASE("spot values of the complexity formula") {
  CHECK(analyze_complexity("def f(a):\n    b = a + 1\n    c = b * 2\n    return c\n", "f") == 1);
  CHECK(analyze_complexity("def f(a):\n    if a > 0:\n        return 1\n    else:\n        return 2\n", "f") == 2);
  CHECK(analyze_complexity("def f(a):\n    while a > 0:\n        if a % 2 == 0:\n            a -= 3\n        a -= 1\n"
                           "    return a\n",
                           "f") == 3);
  CHECK(analyze_complexity("def f(a):\n    while not a:\n        a = a + 1\n    return a\n", "f") == 2);
  CHECK(analyze_complexity("def f(a, b):\n    return a and b or not a\n", "f") == 3);
}

TEST_CASE("formula agrees with the graph shape") {
  auto m = py::parse_module("def f(n):\n    for i in range(n):\n        if i == 2:\n            break\n    return n\n");
  auto g = build_cfg(*m->find_function("f"));
  CHECK(g.violations().empty());
  CHECK(cyclomatic_complexity(g) ==
        static_cast<int>(g.edges.size()) - static_cast<int>(g.nodes.size()) + 2 * g.components);
  CHECK(cyclomatic_complexity(g) == 3);
}

TEST_CASE("generated corpus matches one plus decision count") {
  auto start = std::chrono::steady_clock::now();
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    FunctionGen gen(seed);
    int decisions = 0;
    std::string src = gen.function(decisions);
    int nu = analyze_complexity(src, "f");
    CHECK_MESSAGE(nu == 1 + decisions, "seed " << seed << "\n" << src);
    ++checked;
  }
  CHECK(checked >= 200);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));
}

TEST_CASE("unit thresholds") {
  UnitThresholds t;
  CHECK(t.alphas() == std::vector<int>{1, 2, 4, 7});
  CHECK(classify_unit(1, t).index == 1);
  CHECK(classify_unit(2, t).index == 1);
  CHECK(classify_unit(3, t).index == 2);
  CHECK(classify_unit(4, t).index == 2);
  CHECK(classify_unit(5, t).index == 3);
  CHECK(classify_unit(7, t).index == 3);
  CHECK(classify_unit(8, t).index == 4);
  CHECK(classify_unit(40, t).index == 4);
  CHECK(UnitThresholds::parse("1,3,9").n_units() == 3);
  CHECK_THROWS(UnitThresholds::parse("1,1,4"));
  CHECK_THROWS(UnitThresholds::parse("x"));
}

TEST_CASE("nested functions are part of the enclosing complexity") {
  const char *src =
      "def f(a):\n"
      "    def helper(y):\n"
      "        if y:\n"
      "            return 1\n"
      "        return 0\n"
      "    return helper(a)\n";
  CHECK(analyze_complexity(src, "f") == 2);
}

TEST_CASE("assert is a two-way branch") {
  CHECK(analyze_complexity("def f(a):\n    assert a > 0\n    return a\n", "f") == 2);
  CHECK(analyze_complexity("def f(a, b):\n    assert a and b, 'both'\n    return a\n", "f") == 3);
  auto m = py::parse_module("def f(a):\n    assert a\n    return a\n");
  CHECK(build_cfg(*m->find_function("f")).violations().empty());
}
