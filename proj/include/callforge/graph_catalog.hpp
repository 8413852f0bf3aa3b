#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace callforge {

/// A call graph on nodes 0..node_count-1. Edge u -> v means u's return
/// value feeds v. Catalog graphs number their nodes in topological order.
struct CallGraph {
  std::string id;
  int node_count{0};
  std::vector<std::pair<int, int>> edges;
  int root{0};

  [[nodiscard]] int out_degree(int v) const;
  [[nodiscard]] int in_degree(int v) const;
  /// Parents in ascending node index, which is also argument order.
  [[nodiscard]] std::vector<int> parents(int v) const;
  [[nodiscard]] std::vector<int> children(int v) const;
  [[nodiscard]] std::vector<int> sinks() const;
  /// Kahn's algorithm, smallest ready node first. Empty if cyclic.
  [[nodiscard]] std::vector<int> topological_order() const;
  /// "0->1, 1->2"
  [[nodiscard]] std::string edge_list() const;
};

struct GraphFeatures {
  int l_max{0};
  int b{1};
  int e_count{0};
  std::int64_t metric{0};
};

struct LevelId {
  int index{1};
  friend bool operator==(LevelId, LevelId) = default;
  friend auto operator<=>(LevelId, LevelId) = default;
};

/// Cut points beta_0 < ... < beta_{m-1}; level j covers [beta_{j-1}, beta_j]
/// and the last level is open-ended.
class LevelThresholds {
 public:
  LevelThresholds();  // defaults {1, 4, 9, 16}
  explicit LevelThresholds(std::vector<int> betas);

  [[nodiscard]] const std::vector<int> &betas() const { return betas_; }
  [[nodiscard]] int n_levels() const { return static_cast<int>(betas_.size()); }
  [[nodiscard]] std::string to_string() const;
  static LevelThresholds parse(std::string_view csv);

 private:
  std::vector<int> betas_;
};

/// The sixteen fixed call-graph shapes G1..G16.
const std::vector<CallGraph> &catalog();
/// nullptr when unknown.
const CallGraph *find_graph(std::string_view id);

GraphFeatures graph_features(const CallGraph &g);

/// Ties at a cut point go to the lower level.
LevelId classify_level(std::int64_t metric, const LevelThresholds &thresholds);

/// Names of violated invariants: "too-many-nodes", "no-nodes", "bad-endpoint",
/// "self-loop", "duplicate-edge", "cycle", "no-root", "multiple-roots",
/// "root-mismatch", "unreachable-node". Empty when valid.
std::vector<std::string> validate_graph(const CallGraph &g, int max_nodes = 5);

/// Lexicographically smallest sorted edge list over all relabelings.
std::vector<std::pair<int, int>> canonical_edges(const CallGraph &g);
bool isomorphic(const CallGraph &a, const CallGraph &b);

}  // namespace callforge
