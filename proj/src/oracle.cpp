#include "callforge/oracle.hpp"

namespace callforge {

namespace {

ExecRequest main_request(const NestedProblem &np, std::size_t example, double timeout_s, int run) {
  ExecRequest req;
  req.id = np.id + "#" + std::to_string(example) + "." + std::to_string(run);
  req.source = np.reference_source;
  req.entry_point = "main";
  req.call_args = np.root_inputs[example];
  req.timeout_s = timeout_s;
  req.trace_nodes = np.node_functions;
  return req;
}

std::string failure_reason(const ExecResponse &r) {
  switch (r.status) {
    case ExecResponse::Status::Timeout: return "timeout";
    case ExecResponse::Status::MalformedRequest: return "malformed_request";
    default: return r.exception_type.empty() ? std::string(to_string(r.status)) : r.exception_type;
  }
}

}  // namespace

OracleResult generate_testcases(const NestedProblem &np, ExecutionService &sandbox, const OracleOptions &opts) {
  OracleResult res;
  auto bad = [&](std::string reason) {
    res.verdict = {GenerationVerdict::Status::BadGeneration, std::move(reason)};
    res.testcases.clear();
    res.traced.clear();
    return res;
  };
  if (np.root_inputs.empty()) return bad("no root inputs");
  const int runs = opts.double_run ? 2 : 1;
  std::vector<ExecRequest> reqs;
  for (std::size_t e = 0; e < np.root_inputs.size(); ++e) {
    for (int r = 0; r < runs; ++r) reqs.push_back(main_request(np, e, opts.timeout_s, r));
  }
  auto resps = sandbox.run_batch(reqs);
  for (std::size_t e = 0; e < np.root_inputs.size(); ++e) {
    const ExecResponse &first = resps[e * static_cast<std::size_t>(runs)];
    if (!first.ok()) return bad(failure_reason(first));
    if (runs == 2) {
      const ExecResponse &second = resps[e * 2 + 1];
      if (!second.ok()) return bad(failure_reason(second));
      if (second.value_repr != first.value_repr || second.traces != first.traces) return bad("nondeterministic");
    }
    std::vector<std::string> row;
    for (const auto &fn : np.node_functions) {
      auto it = first.traces.find(fn);
      if (it == first.traces.end()) return bad("node " + fn + " was never called");
      row.push_back(it->second);
    }
    res.traced.push_back(std::move(row));
    res.testcases.push_back({np.root_inputs[e], first.value_repr});
  }
  res.verdict = {GenerationVerdict::Status::Valid, ""};
  return res;
}

std::map<int, std::string> trace_nodes(const NestedProblem &np, const ValueList &root_input, ExecutionService &sandbox,
                                       double timeout_s) {
  NestedProblem one = np;
  one.root_inputs = {root_input};
  auto res = generate_testcases(one, sandbox, {timeout_s, false});
  if (res.verdict.status != GenerationVerdict::Status::Valid) {
    throw CompositionError("tracing " + np.id + " failed: " + res.verdict.reason);
  }
  std::map<int, std::string> out;
  for (std::size_t v = 0; v < res.traced.front().size(); ++v) out[static_cast<int>(v)] = res.traced.front()[v];
  return out;
}

std::size_t run_oracle(std::vector<NestedProblem> &problems, const ProblemBank &bank, ExecutionService &sandbox,
                       const OracleOptions &opts) {
  std::vector<OracleResult> results(problems.size());
  parallel_for(problems.size(), sandbox.concurrency(),
               [&](std::size_t i) { results[i] = generate_testcases(problems[i], sandbox, opts); });
  std::size_t valid = 0;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    auto &np = problems[i];
    np.verdict = results[i].verdict;
    np.testcases = std::move(results[i].testcases);
    np.traced = std::move(results[i].traced);
    np.rendered_prompt.clear();
    if (np.verdict.status == GenerationVerdict::Status::Valid) {
      const CallGraph *g = find_graph(np.graph_id);
      if (g == nullptr) throw CompositionError("unknown graph " + np.graph_id);
      np.rendered_prompt = render_prompt(*g, bank, np, 0);
      ++valid;
    }
  }
  return valid;
}

}  // namespace callforge
