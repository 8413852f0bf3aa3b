#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "callforge/pylang.hpp"

namespace callforge {

struct BasicBlock {
  int id{0};
  std::string label;  // "entry", "exit", "if-test", "loop-head", ...
  int first_line{0};
  int statement_count{0};
};

struct ControlFlowGraph {
  std::vector<BasicBlock> nodes;
  std::vector<std::pair<int, int>> edges;
  int components{1};
  int entry{0};
  int exit{1};

  [[nodiscard]] int out_degree(int node) const;
  [[nodiscard]] int in_degree(int node) const;
  /// Checks endpoint validity and the one-entry/at-least-one-exit shape.
  [[nodiscard]] std::vector<std::string> violations() const;
};

/// Lowers one function to basic blocks. Short-circuit `and`/`or` operands get
/// their own blocks so every decision point is a two-way branch; nested
/// function definitions are inlined as a sub-region of the enclosing graph.
ControlFlowGraph build_cfg(const py::Stmt &function_def);

/// E - N + 2P.
int cyclomatic_complexity(const ControlFlowGraph &cfg);

/// Parses `source`, builds the CFG of `entry_point` and returns its complexity.
/// Throws py::ParseError.
int analyze_complexity(std::string_view source, std::string_view entry_point = {});

struct UnitId {
  int index{1};
  friend bool operator==(UnitId, UnitId) = default;
  friend auto operator<=>(UnitId, UnitId) = default;
};

/// Cut points alpha_0 < alpha_1 < ... < alpha_{n-1}; unit j covers
/// [alpha_{j-1}, alpha_j] and the last unit is open-ended. alpha_0 must be 1.
class UnitThresholds {
 public:
  UnitThresholds();  // defaults {1, 2, 4, 7}
  explicit UnitThresholds(std::vector<int> alphas);

  [[nodiscard]] const std::vector<int> &alphas() const { return alphas_; }
  [[nodiscard]] int n_units() const { return static_cast<int>(alphas_.size()); }
  [[nodiscard]] std::string to_string() const;

  /// Parses "1,2,4,7".
  static UnitThresholds parse(std::string_view csv);

 private:
  std::vector<int> alphas_;
};

/// Smallest j with nu <= alpha_j, so a value on a cut point lands in the lower unit.
UnitId classify_unit(int nu, const UnitThresholds &thresholds);

/// Shared by graph levels: parses a comma separated list of strictly
/// increasing positive integers. Throws std::invalid_argument.
std::vector<int> parse_cut_points(std::string_view csv);

}  // namespace callforge
