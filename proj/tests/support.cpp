#include "support.hpp"

#include "callforge/sandbox.hpp"

namespace callforge::testing {

ProblemBank classified_fixture_bank() {
  static const ProblemBank bank = [] {
    auto res = ingest_bank(data_path("seed_bank.jsonl"));
    BuiltinSandbox sandbox;
    infer_signatures(res.bank, sandbox);
    classify_bank(res.bank, UnitThresholds());
    return res.bank;
  }();
  return bank;
}

ProblemBank fibonacci_chain_bank() {
  ProblemBank all = classified_fixture_bank();
  ProblemBank out;
  for (const char *id : {"fib", "squares", "sumlist", "sqrt", "isint"}) out.problems.push_back(*all.find(id));
  return out;
}

}  // namespace callforge::testing
