#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "callforge/cfg.hpp"
#include "callforge/graph_catalog.hpp"
#include "callforge/problem_bank.hpp"
#include "callforge/util.hpp"

namespace callforge {

/// mapping[v] is the problem id placed at node v.
struct Assignment {
  std::string graph_id;
  std::vector<std::string> mapping;

  friend bool operator==(const Assignment &, const Assignment &) = default;
};

class NoValidAssignment : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CompositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True when the problem may sit at a node of the given in-degree in `unit`.
bool node_candidate(const UnitProblem &p, UnitId unit, int in_degree);

/// Every violated assignment invariant, as readable messages.
std::vector<std::string> check_assignment(const CallGraph &g, const ProblemBank &bank, const Assignment &a,
                                          std::optional<UnitId> unit = std::nullopt);

/// The set of valid assignments of one (graph, bank, unit) triple. Problems
/// sharing a signature are interchangeable for the type constraints, so
/// counting walks signature classes and multiplies falling factorials.
class AssignmentSpace {
 public:
  AssignmentSpace(const CallGraph &g, const ProblemBank &bank, UnitId unit);

  /// Throws std::overflow_error beyond 64 bits.
  [[nodiscard]] std::uint64_t count() const { return count_; }
  /// Bijection from [0, count) onto valid assignments.
  [[nodiscard]] Assignment unrank(std::uint64_t index) const;
  /// Uniform draw driven only by seed. Throws NoValidAssignment.
  [[nodiscard]] Assignment sample(std::uint64_t seed) const;
  /// Up to n distinct indices drawn uniformly without replacement, ascending.
  [[nodiscard]] std::vector<std::uint64_t> sample_indices(std::uint64_t seed, std::uint64_t n) const;

  /// Lazy depth-first walk in lexicographic order of per-node candidate lists.
  class Iterator {
   public:
    bool next(Assignment &out);

   private:
    friend class AssignmentSpace;
    explicit Iterator(const AssignmentSpace &space);
    bool advance(std::size_t depth);
    bool fits(std::size_t depth, std::size_t candidate) const;

    const AssignmentSpace *space_;
    std::vector<std::size_t> cursor_;  // by position in topological order
    std::vector<bool> used_;
    bool started_{false};
    bool done_{false};
  };
  [[nodiscard]] Iterator iterate() const { return Iterator(*this); }

  [[nodiscard]] const CallGraph &graph() const { return graph_; }

 private:
  struct SigClass {
    TypeSignature signature;
    std::vector<std::size_t> members;  // indices into bank order
  };

  unsigned __int128 count_from(std::size_t pos, std::vector<int> &chosen, std::vector<int> &used) const;
  bool class_fits(std::size_t pos, int cls, const std::vector<int> &chosen) const;

  CallGraph graph_;
  const ProblemBank *bank_;
  std::vector<int> order_;
  std::vector<std::vector<int>> parents_;
  std::vector<SigClass> classes_;
  std::vector<std::vector<int>> node_classes_;           // candidate classes per node
  std::vector<std::vector<std::size_t>> node_problems_;  // candidate problems per node
  std::uint64_t count_{0};
};

/// Enumerates all assignments by brute force over ordered distinct tuples.
/// Meant for small banks.
std::vector<Assignment> brute_force_assignments(const CallGraph &g, const ProblemBank &bank, UnitId unit);

/// seed' = hash(master, unit, graph)
std::uint64_t cell_seed(std::uint64_t master_seed, UnitId unit, std::string_view graph_id);

struct TestCase {
  ValueList root_input;
  std::string expected_repr;
};

struct GenerationVerdict {
  enum class Status { Pending, Valid, BadGeneration };
  Status status{Status::Pending};
  std::string reason;
};

std::string_view to_string(GenerationVerdict::Status s);

struct NestedProblem {
  std::string id;
  UnitId unit;
  std::string graph_id;
  LevelId level;
  std::int64_t metric{0};
  Assignment assignment;
  std::vector<std::string> node_functions;  // callable name per node after renaming
  std::string reference_source;
  std::string rendered_prompt;              // empty until traced
  std::vector<ValueList> root_inputs;
  std::vector<std::vector<std::string>> traced;  // [example][node] repr
  std::uint64_t master_seed{0};
  std::uint64_t seed{0};
  std::uint64_t assignment_index{0};
  std::vector<TestCase> testcases;
  GenerationVerdict verdict;
};

Json nested_to_json(const NestedProblem &np);
NestedProblem nested_from_json(const Json &j);  // throws std::invalid_argument

struct AssembledProgram {
  std::string source;
  std::vector<std::string> node_functions;
};

/// Concatenates the node solutions, renaming clashing top-level names of
/// later nodes with a `_n<node>` suffix and hoisting imports, then appends
/// a `main` wiring parents' returns into children in topological order.
AssembledProgram assemble_reference_code(const CallGraph &g, const ProblemBank &bank, const Assignment &a);

/// Seed prompt with its assert lines dropped.
std::string strip_assertions(std::string_view prompt);

/// Renders the combined prompt from traced values of one root example.
/// Throws CompositionError when a traced value is missing.
std::string render_prompt(const CallGraph &g, const ProblemBank &bank, const NestedProblem &np,
                          std::size_t example = 0);

/// Builds a draft (assembled, untraced) nested problem.
NestedProblem make_draft(const CallGraph &g, const ProblemBank &bank, const Assignment &a, UnitId unit,
                         const LevelThresholds &betas);

struct GenerationRequest {
  std::vector<UnitId> units;             // empty: all units present in the thresholds
  std::vector<std::string> graph_ids;    // empty: whole catalog
  std::uint64_t count{100};
  std::uint64_t master_seed{0};
  UnitThresholds alphas;
  LevelThresholds betas;
  std::size_t workers{1};
};

/// Samples `count` distinct assignments per (unit, graph) cell with at least
/// one valid assignment. Output order is (unit, catalog order, index order).
std::vector<NestedProblem> generate_drafts(const ProblemBank &bank, const GenerationRequest &req);

struct ComplexityMatrix {
  int n_units{0};
  int n_levels{0};
  std::vector<std::vector<std::vector<std::string>>> members;  // [unit-1][level-1]

  [[nodiscard]] std::size_t count(int unit, int level) const {
    return members[static_cast<std::size_t>(unit - 1)][static_cast<std::size_t>(level - 1)].size();
  }
};

ComplexityMatrix bucket_matrix(const std::vector<NestedProblem> &problems, int n_units, int n_levels);

}  // namespace callforge
