#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "callforge/problem_bank.hpp"

namespace callforge::testing {

inline std::filesystem::path data_path(const std::string &name) {
  return std::filesystem::path(CALLFORGE_TEST_DATA) / name;
}

/// Typed stub problem for counting tests; the solution is never executed.
inline UnitProblem stub(const std::string &id, std::vector<TypeTag> in, TypeTag out, int unit = 1) {
  UnitProblem p;
  p.id = id;
  p.prompt = "stub " + id;
  p.entry_point = "f_" + id;
  std::string params;
  for (std::size_t i = 0; i < in.size(); ++i) params += (i ? ", a" : "a") + std::to_string(i);
  p.solution_source = "def f_" + id + "(" + params + "):\n    return a0\n";
  Example ex;
  ex.args.assign(in.size(), Value(std::int64_t{0}));
  ex.out = Value(std::int64_t{0});
  p.examples.push_back(ex);
  p.signature = TypeSignature{std::move(in), out};
  p.nu = 1;
  p.unit = UnitId{unit};
  p.eligible = true;
  return p;
}

/// The fixture bank after ingest, signature inference and unit assignment.
ProblemBank classified_fixture_bank();

/// The five chain problems of the worked fibonacci example, all in unit 1.
ProblemBank fibonacci_chain_bank();

}  // namespace callforge::testing
