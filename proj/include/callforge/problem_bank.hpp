#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "callforge/cfg.hpp"
#include "callforge/sandbox.hpp"
#include "callforge/util.hpp"
#include "callforge/value.hpp"

namespace callforge {

struct TypeSignature {
  std::vector<TypeTag> input_types;
  TypeTag output_type{TypeTag::None};

  friend bool operator==(const TypeSignature &, const TypeSignature &) = default;
  /// "(int, str) -> list[int]"
  [[nodiscard]] std::string to_string() const;
};

struct Example {
  ValueList args;
  Value out;
};

struct UnitProblem {
  std::string id;
  std::string prompt;
  std::string solution_source;
  std::string entry_point;
  std::vector<Example> examples;
  std::optional<TypeSignature> signature;
  std::optional<int> nu;
  std::optional<UnitId> unit;
  bool eligible{false};
  std::string ineligible_reason;

  [[nodiscard]] std::size_t arity() const { return examples.empty() ? 0 : examples.front().args.size(); }
};

struct Rejection {
  int line{0};
  std::string id;  // empty when the record has no usable id
  std::string reason;
};

struct ProblemBank {
  std::vector<UnitProblem> problems;
  std::string source_label;

  [[nodiscard]] const UnitProblem *find(std::string_view id) const;
  [[nodiscard]] std::size_t size() const { return problems.size(); }
};

struct IngestResult {
  ProblemBank bank;
  std::vector<Rejection> rejections;
};

class BankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Validates one bank record. Throws std::invalid_argument with the reason.
UnitProblem parse_problem_record(const Json &record);
Json problem_to_json(const UnitProblem &p);

/// Reads a line-delimited bank. Invalid records land in the rejection
/// report with their line number. Throws BankError if the file is unreadable.
IngestResult ingest_bank(const std::filesystem::path &path);
IngestResult ingest_bank_text(std::string_view text, std::string source_label);
void write_bank(const std::filesystem::path &path, const ProblemBank &bank);
Json rejection_to_json(const Rejection &r);

struct SignatureResult {
  enum class Status { Ok, SandboxFailure, ExecutionFailed, OutputMismatch, Disagreement, Unsupported };
  Status status{Status::Ok};
  std::optional<TypeSignature> signature;
  std::string error;

  [[nodiscard]] bool ok() const { return status == Status::Ok; }
};

/// Runs the solution on every example and reads the runtime types of the
/// arguments and the return value; all examples must agree.
SignatureResult infer_signature(const UnitProblem &problem, ExecutionService &sandbox, double timeout_s = 10.0);

/// Fills signature and eligibility for every problem in place.
void infer_signatures(ProblemBank &bank, ExecutionService &sandbox, double timeout_s = 10.0);

/// Fills nu and unit from the entry point's control-flow graph. Problems
/// whose solution cannot be analyzed become ineligible.
void classify_bank(ProblemBank &bank, const UnitThresholds &thresholds);

}  // namespace callforge
