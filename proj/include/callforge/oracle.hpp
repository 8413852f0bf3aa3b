#pragma once

#include <map>
#include <string>
#include <vector>

#include "callforge/composer.hpp"
#include "callforge/sandbox.hpp"

namespace callforge {

struct OracleOptions {
  double timeout_s{10.0};
  /// Run every case twice and reject outputs that differ between runs.
  bool double_run{true};
};

struct OracleResult {
  GenerationVerdict verdict;
  std::vector<TestCase> testcases;
  std::vector<std::vector<std::string>> traced;  // [example][node] repr
};

/// Runs main on each root input. Any exception, timeout or nondeterminism is
/// a bad generation. Throws SandboxUnavailable if the service cannot run code.
OracleResult generate_testcases(const NestedProblem &np, ExecutionService &sandbox, const OracleOptions &opts = {});

/// Return value of every node function for one root input, keyed by node.
/// Throws CompositionError carrying the failure when execution does not succeed.
std::map<int, std::string> trace_nodes(const NestedProblem &np, const ValueList &root_input, ExecutionService &sandbox,
                                       double timeout_s = 10.0);

/// Fills testcases, traces, verdict and prompt in place. Returns the number
/// of problems that stayed valid.
std::size_t run_oracle(std::vector<NestedProblem> &problems, const ProblemBank &bank, ExecutionService &sandbox,
                       const OracleOptions &opts = {});

}  // namespace callforge
