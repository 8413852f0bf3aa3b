#include <doctest.h>

#include "callforge/interpreter.hpp"

using namespace callforge;

namespace {

ExecOutcome run(const std::string &src, const std::string &entry, ValueList args = {},
                ExecLimits limits = {}) {
  return execute_python(src, entry, args, limits);
}

std::string value_of(const std::string &src, const std::string &entry, ValueList args = {}) {
  auto out = run(src, entry, std::move(args));
  REQUIRE_MESSAGE(out.status == ExecOutcome::Status::Ok, out.exception_type << ": " << out.message);
  return out.value.repr();
}

std::string error_of(const std::string &src, const std::string &entry, ValueList args = {}) {
  auto out = run(src, entry, std::move(args));
  return out.exception_type;
}

}  // namespace

TEST_CASE("fibonacci chain functions") {
  CHECK(run("def f(xs):\n    return [x * x for x in xs]\n", "f", {Value::list()}).status ==
        ExecOutcome::Status::CompileError);

  const std::string ok = R"(import math

def generate_fibonacci(n):
    fib = [0, 1]
    while len(fib) < n:
        fib.append(fib[-1] + fib[-2])
    return fib[:n]

def square_numbers(xs):
    out = []
    for x in xs:
        out.append(x * x)
    return out

def square_root(n):
    return math.sqrt(n)

def is_integer(x):
    return x.is_integer()

def main(n):
    return is_integer(square_root(sum(square_numbers(generate_fibonacci(n)))))
)";
  CHECK(value_of(ok, "generate_fibonacci", {Value(5)}) == "[0, 1, 1, 2, 3]");
  CHECK(value_of(ok, "square_numbers", {parse_literal("[0, 1, 1, 2, 3]")}) == "[0, 1, 1, 4, 9]");
  CHECK(value_of(ok, "square_root", {Value(15)}) == "3.872983346207417");
  CHECK(value_of(ok, "main", {Value(5)}) == "False");
}

TEST_CASE("arithmetic follows Python semantics") {
  const std::string src = R"(
def f(a, b):
    return (a // b, a % b, a / b, -a // b, -a % b, a ** 2, 7.5 // 2, -7.5 % 2)
)";
  CHECK(value_of(src, "f", {Value(7), Value(2)}) == "(3, 1, 3.5, -4, 1, 49, 3.0, 0.5)");
  CHECK(error_of(src, "f", {Value(1), Value(0)}) == "ZeroDivisionError");
  const std::string big = "def f(x):\n    return x * x * x * x * x\n";
  CHECK(error_of(big, "f", {Value(std::int64_t{10'000'000})}) == "OverflowError");
}

TEST_CASE("strings, dicts and sets") {
  const std::string src = R"(
def f(s):
    words = s.split()
    counts = {}
    for w in words:
        counts[w] = counts.get(w, 0) + 1
    keys = sorted(counts.keys())
    return ("-".join(keys), counts, len(set(words)), s.upper()[::-1], s[1:4])
)";
  CHECK(value_of(src, "f", {Value("b a b c")}) ==
        "('a-b-c', {'b': 2, 'a': 1, 'c': 1}, 3, 'C B A B', ' a ')");
}

TEST_CASE("control flow, closures and defaults") {
  const std::string src = R"(
def outer(n, step=2):
    total = 0
    def add(x):
        return x + step
    i = 0
    while True:
        i += 1
        if i > n:
            break
        elif i % 2 == 0:
            continue
        total = add(total)
    for a, b in zip(range(3), [10, 20, 30]):
        total += a * b
    return total
)";
  CHECK(value_of(src, "outer", {Value(5)}) == "86");
  CHECK(value_of(src, "outer", {Value(5), Value(1)}) == "83");
}

TEST_CASE("runtime error classes") {
  CHECK(error_of("def f():\n    return undefined_name\n", "f") == "NameError");
  CHECK(error_of("def f():\n    x = x + 1\n    return x\n", "f") == "UnboundLocalError");
  CHECK(error_of("def f():\n    return [1][3]\n", "f") == "IndexError");
  CHECK(error_of("def f():\n    return 1 + 'a'\n", "f") == "TypeError");
  CHECK(error_of("def f():\n    return (1).foo\n", "f") == "AttributeError");
  CHECK(error_of("def f():\n    return int('x')\n", "f") == "ValueError");
  CHECK(error_of("def f(n):\n    return f(n + 1)\n", "f", {Value(0)}) == "RecursionError");
  CHECK(error_of("def f():\n    raise ValueError('bad')\n", "f") == "ValueError");
  CHECK(error_of("def f():\n    return {}['k']\n", "f") == "KeyError");
  CHECK(error_of("def f(:\n    return 1\n", "f") == "SyntaxError");
  CHECK(error_of("def f():\nreturn 1\n", "f") == "IndentationError");
  CHECK(error_of("import os\ndef f():\n    return 1\n", "f") == "ImportError");
}

TEST_CASE("wall-clock timeout stops runaway loops") {
  ExecLimits limits;
  limits.timeout = std::chrono::milliseconds(100);
  auto start = std::chrono::steady_clock::now();
  auto out = run("def f():\n    while True:\n        pass\n", "f", {}, limits);
  auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(out.status == ExecOutcome::Status::Timeout);
  CHECK(elapsed < std::chrono::seconds(2));
}

TEST_CASE("tracing records each traced function's last return") {
  const std::string src = R"(
def a(x):
    return x + 1

def b(x):
    return x * 2

def main(x):
    return b(a(x))
)";
  auto out = execute_python(src, "main", {Value(3)}, {}, {"a", "b"});
  REQUIRE(out.status == ExecOutcome::Status::Ok);
  CHECK(out.traces.at("a") == "4");
  CHECK(out.traces.at("b") == "8");
  CHECK(out.value.repr() == "8");
}

TEST_CASE("deep but legal recursion fits the stack") {
  const std::string src = "def f(n):\n    if n == 0:\n        return 0\n    return 1 + f(n - 1)\n";
  CHECK(value_of(src, "f", {Value(900)}) == "900");
}

TEST_CASE("assert statements") {
  const std::string src = "def f(x):\n    assert x > 0, 'x must be positive'\n    return x\n";
  CHECK(value_of(src, "f", {Value(3)}) == "3");
  CHECK(error_of(src, "f", {Value(-3)}) == "AssertionError");
  auto out = run(src, "f", {Value(0)});
  CHECK(out.message == "x must be positive");
}
