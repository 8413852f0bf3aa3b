#include "oracles.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "support.hpp"

namespace callforge::testing {

namespace {

const TypeTag I = TypeTag::Int;
const TypeTag L = TypeTag::ListInt;
const TypeTag S = TypeTag::Str;

ProblemBank bank_of(std::vector<UnitProblem> ps) {
  ProblemBank b;
  b.problems = std::move(ps);
  return b;
}

}  // namespace

ProblemBank four_problem_bank() {
  return bank_of({stub("A", {I}, I), stub("B", {I}, L), stub("C", {L}, I), stub("D", {I}, I)});
}

std::set<std::vector<std::string>> brute_force(const CallGraph &g, const ProblemBank &bank, int unit) {
  std::vector<const UnitProblem *> pool;
  for (const auto &p : bank.problems) {
    if (p.eligible && p.unit && p.unit->index == unit && p.signature) pool.push_back(&p);
  }
  std::set<std::vector<std::string>> out;
  const auto n = static_cast<std::size_t>(g.node_count);
  std::vector<std::size_t> pick(n, 0);
  std::function<void(std::size_t)> rec = [&](std::size_t v) {
    if (v == n) {
      for (std::size_t node = 0; node < n; ++node) {
        std::vector<int> parents;
        for (const auto &[a, b] : g.edges) {
          if (b == static_cast<int>(node)) parents.push_back(a);
        }
        std::sort(parents.begin(), parents.end());
        const auto &sig = *pool[pick[node]]->signature;
        if (!parents.empty() && sig.input_types.size() != parents.size()) return;
        for (std::size_t k = 0; k < parents.size(); ++k) {
          if (pool[pick[static_cast<std::size_t>(parents[k])]]->signature->output_type != sig.input_types[k]) return;
        }
      }
      std::vector<std::string> ids;
      for (auto i : pick) ids.push_back(pool[i]->id);
      out.insert(ids);
      return;
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (std::find(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(v), i) != pick.begin() + static_cast<std::ptrdiff_t>(v)) {
        continue;
      }
      pick[v] = i;
      rec(v + 1);
    }
  };
  rec(0);
  return out;
}

ProblemBank random_bank(std::uint64_t seed) {
  Rng rng(seed);
  const TypeTag tags[] = {I, L, S};
  std::vector<UnitProblem> ps;
  auto n = 1 + rng.below(8);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::vector<TypeTag> in;
    auto arity = 1 + rng.below(rng.below(3) == 0 ? 3 : 1);
    for (std::uint64_t k = 0; k < arity; ++k) in.push_back(tags[rng.below(3)]);
    ps.push_back(stub("p" + std::to_string(i), in, tags[rng.below(3)], 1 + static_cast<int>(rng.below(4) == 0)));
  }
  return bank_of(std::move(ps));
}

bool same_shape(const CallGraph &a, const CallGraph &b) {
  if (a.node_count != b.node_count || a.edges.size() != b.edges.size()) return false;
  std::set<std::pair<int, int>> eb(b.edges.begin(), b.edges.end());
  std::vector<int> perm(static_cast<std::size_t>(a.node_count));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    bool all = true;
    for (const auto &[x, y] : a.edges) {
      if (!eb.count({perm[static_cast<std::size_t>(x)], perm[static_cast<std::size_t>(y)]})) {
        all = false;
        break;
      }
    }
    if (all) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

const std::string &worked_example_prompt() {
  static const std::string text =
      "Here are 5 prompts that are used to generate 5 functions respectively.\n\n"
      "PROMPT 1:\n\"\"\"\nWrite a python function to generate the first n Fibonacci numbers.\n"
      "assert generate_fibonacci(5) == [0, 1, 1, 2, 3]\n\"\"\"\n\n"
      "PROMPT 2:\n\"\"\"\nWrite a python function to square each number in a given list.\n"
      "assert square_numbers([0, 1, 1, 2, 3]) == [0, 1, 1, 4, 9]\n\"\"\"\n\n"
      "PROMPT 3:\n\"\"\"\nWrite a python function to find the sum of all numbers in a list.\n"
      "assert sum_numbers([0, 1, 1, 4, 9]) == 15\n\"\"\"\n\n"
      "PROMPT 4:\n\"\"\"\nWrite a python function to find the square root of a number.\n"
      "assert square_root(15) == 3.872983346207417\n\"\"\"\n\n"
      "PROMPT 5:\n\"\"\"\nWrite a python function to check if a number is an integer.\n"
      "assert is_integer(3.872983346207417) == False\n\"\"\"\n\n"
      "Please write the above 5 functions respectively and write a new function named main to call the above 5 "
      "functions.\n\n"
      "When calling these functions, please follow the following rules:\n\n"
      "The input of the main function equals the input of PROMPT 1 :generate_fibonacci.\n\n"
      "The output of function PROMPT 1: generate_fibonacci serves as the input of PROMPT 2: square_numbers.\n\n"
      "The output of function PROMPT 2: square_numbers serves as the input of PROMPT 3: sum_numbers.\n\n"
      "The output of function PROMPT 3: sum_numbers serves as the input of PROMPT 4: square_root.\n\n"
      "The output of function PROMPT 4: square_root serves as the input of PROMPT 5: is_integer.\n\n"
      "The main function returns the output of the PROMPT 5: is_integer.\n";
  return text;
}

}  // namespace callforge::testing
