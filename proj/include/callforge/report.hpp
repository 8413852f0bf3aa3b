#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "callforge/composer.hpp"
#include "callforge/eval.hpp"

namespace callforge {

/// Mean and sample standard deviation (n - 1); std is 0 for one value.
struct Dispersion {
  double mean{0};
  double std{0};
};
std::optional<Dispersion> dispersion(const std::vector<double> &values);

struct UnitRow {
  int unit{1};
  std::map<std::uint64_t, double> per_seed;  // seeds with at least one scored cell
  std::optional<Dispersion> score;
  std::size_t problems{0};
};

struct GraphRow {
  std::string graph_id;
  int level{1};
  std::map<int, double> per_unit;  // units with data
  std::optional<double> average;
};

struct ErrorRow {
  int unit{1};
  std::array<std::size_t, 4> counts{};  // indexed by AbilityCategory
  std::size_t failed{0};
};

struct MatrixCell {
  int unit{1};
  int level{1};
  std::size_t problems{0};
  std::optional<double> score;
};

struct SizeTable {
  std::vector<int> units;
  std::vector<std::string> graph_ids;
  std::vector<std::vector<std::uint64_t>> counts;  // [unit row][graph column]
  std::vector<std::uint64_t> unit_totals;
  std::uint64_t total{0};
};

struct Report {
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  int k{1};
  std::vector<UnitRow> units;
  std::vector<GraphRow> graphs;
  std::vector<ErrorRow> errors;
  std::vector<MatrixCell> matrix;
  std::optional<SizeTable> sizes;
};

struct SummaryInput {
  std::vector<EvalResult> results;
  std::vector<NestedProblem> bench;  // for the matrix problem counts; may be empty
  std::vector<std::uint64_t> seeds;  // empty: taken from the results
  std::string config_hash;
  int n_units{4};
  int n_levels{4};
  int k{1};
  std::optional<SizeTable> sizes;
};

/// Scores are percentages. A cell score is the mean pass@k over its
/// evaluated problems; unit scores macro-average cell scores over graphs per
/// seed. Cells without evaluated problems are absent and excluded.
Report summarize(const SummaryInput &in);

/// Markdown tables. Identical reports render to identical bytes.
std::string render_report(const Report &r);

/// Exact valid-assignment counts per (unit, graph).
SizeTable count_benchmark_space(const ProblemBank &bank, const std::vector<CallGraph> &graphs, int n_units);

std::string render_size_table(const SizeTable &t);

}  // namespace callforge
