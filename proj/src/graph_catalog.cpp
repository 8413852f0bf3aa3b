#include "callforge/graph_catalog.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <set>
#include <stdexcept>

#include "callforge/cfg.hpp"

namespace callforge {

int CallGraph::out_degree(int v) const {
  return static_cast<int>(std::count_if(edges.begin(), edges.end(), [v](auto e) { return e.first == v; }));
}

int CallGraph::in_degree(int v) const {
  return static_cast<int>(std::count_if(edges.begin(), edges.end(), [v](auto e) { return e.second == v; }));
}

std::vector<int> CallGraph::parents(int v) const {
  std::vector<int> out;
  for (auto [a, b] : edges) {
    if (b == v) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> CallGraph::children(int v) const {
  std::vector<int> out;
  for (auto [a, b] : edges) {
    if (a == v) out.push_back(b);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> CallGraph::sinks() const {
  std::vector<int> out;
  for (int v = 0; v < node_count; ++v) {
    if (out_degree(v) == 0) out.push_back(v);
  }
  return out;
}

std::vector<int> CallGraph::topological_order() const {
  std::vector<int> indeg(static_cast<std::size_t>(node_count), 0);
  for (auto [a, b] : edges) {
    if (b >= 0 && b < node_count) ++indeg[static_cast<std::size_t>(b)];
  }
  std::set<int> ready;
  for (int v = 0; v < node_count; ++v) {
    if (indeg[static_cast<std::size_t>(v)] == 0) ready.insert(v);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    int v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (int c : children(v)) {
      if (c >= 0 && c < node_count && --indeg[static_cast<std::size_t>(c)] == 0) ready.insert(c);
    }
  }
  if (static_cast<int>(order.size()) != node_count) return {};
  return order;
}

std::string CallGraph::edge_list() const {
  std::string s;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(edges[i].first) + "->" + std::to_string(edges[i].second);
  }
  return s;
}

LevelThresholds::LevelThresholds() : betas_{1, 4, 9, 16} {}

LevelThresholds::LevelThresholds(std::vector<int> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("level thresholds need at least one cut point");
  if (betas_.front() != 1) throw std::invalid_argument("beta_0 must be 1 so levels cover M >= 1");
  for (std::size_t i = 1; i < betas_.size(); ++i) {
    if (betas_[i] <= betas_[i - 1]) throw std::invalid_argument("level thresholds must be strictly increasing");
  }
}

LevelThresholds LevelThresholds::parse(std::string_view csv) { return LevelThresholds(parse_cut_points(csv)); }

std::string LevelThresholds::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(betas_[i]);
  }
  return s;
}

const std::vector<CallGraph> &catalog() {
  static const std::vector<CallGraph> graphs = [] {
    auto chain = [](const std::string &id, int n) {
      CallGraph g{id, n, {}, 0};
      for (int i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
      return g;
    };
    auto fan = [](const std::string &id, int width) {
      CallGraph g{id, width + 1, {}, 0};
      for (int i = 1; i <= width; ++i) g.edges.emplace_back(0, i);
      return g;
    };
    return std::vector<CallGraph>{
        chain("G1", 2),
        chain("G2", 3),
        chain("G3", 4),
        {"G4", 4, {{0, 1}, {1, 2}, {1, 3}}, 0},
        fan("G5", 2),
        fan("G6", 3),
        fan("G7", 4),
        chain("G8", 5),
        {"G9", 4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}}, 0},
        {"G10", 5, {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {3, 4}}, 0},
        {"G11", 5, {{0, 1}, {0, 2}, {0, 3}, {1, 4}, {2, 4}, {3, 4}}, 0},
        {"G12", 3, {{0, 1}, {0, 2}, {1, 2}}, 0},
        {"G13", 5, {{0, 1}, {0, 2}, {1, 3}, {1, 4}}, 0},
        {"G14", 5, {{0, 1}, {0, 2}, {1, 3}, {2, 4}}, 0},
        {"G15", 5, {{0, 1}, {1, 2}, {1, 3}, {2, 4}, {3, 4}}, 0},
        {"G16", 5, {{0, 1}, {0, 2}, {1, 3}, {1, 4}, {2, 4}}, 0},
    };
  }();
  return graphs;
}

const CallGraph *find_graph(std::string_view id) {
  for (const auto &g : catalog()) {
    if (g.id == id) return &g;
  }
  return nullptr;
}

GraphFeatures graph_features(const CallGraph &g) {
  GraphFeatures f;
  f.e_count = static_cast<int>(g.edges.size());
  std::vector<int> depth(static_cast<std::size_t>(g.node_count), -1);
  auto order = g.topological_order();
  if (!order.empty()) depth[static_cast<std::size_t>(g.root)] = 0;
  for (int v : order) {
    int dv = depth[static_cast<std::size_t>(v)];
    if (dv < 0) continue;
    for (int c : g.children(v)) {
      depth[static_cast<std::size_t>(c)] = std::max(depth[static_cast<std::size_t>(c)], dv + 1);
    }
  }
  f.l_max = depth.empty() ? 0 : std::max(0, *std::max_element(depth.begin(), depth.end()));
  int branching = 0;
  for (int v = 0; v < g.node_count; ++v) {
    if (g.out_degree(v) >= 2) ++branching;
    if (g.in_degree(v) >= 2) ++branching;
  }
  f.b = std::max(1, branching);
  f.metric = static_cast<std::int64_t>(f.l_max) * f.b * f.e_count;
  return f;
}

LevelId classify_level(std::int64_t metric, const LevelThresholds &thresholds) {
  const auto &b = thresholds.betas();
  for (std::size_t j = 1; j < b.size(); ++j) {
    if (metric <= b[j]) return LevelId{static_cast<int>(j)};
  }
  return LevelId{thresholds.n_levels()};
}

std::vector<std::string> validate_graph(const CallGraph &g, int max_nodes) {
  std::vector<std::string> v;
  auto add = [&](const char *name) {
    if (std::find(v.begin(), v.end(), name) == v.end()) v.emplace_back(name);
  };
  if (g.node_count <= 0) {
    add("no-nodes");
    return v;
  }
  if (g.node_count > max_nodes) add("too-many-nodes");
  std::set<std::pair<int, int>> seen;
  bool endpoints_ok = true;
  for (auto e : g.edges) {
    if (e.first < 0 || e.first >= g.node_count || e.second < 0 || e.second >= g.node_count) {
      add("bad-endpoint");
      endpoints_ok = false;
      continue;
    }
    if (e.first == e.second) add("self-loop");
    if (!seen.insert(e).second) add("duplicate-edge");
  }
  if (!endpoints_ok) return v;
  if (g.topological_order().empty()) add("cycle");
  std::vector<int> roots;
  for (int n = 0; n < g.node_count; ++n) {
    if (g.in_degree(n) == 0) roots.push_back(n);
  }
  if (roots.empty()) add("no-root");
  if (roots.size() > 1) add("multiple-roots");
  if (g.root < 0 || g.root >= g.node_count || g.in_degree(g.root) != 0) add("root-mismatch");
  if (g.root >= 0 && g.root < g.node_count) {
    std::vector<bool> reached(static_cast<std::size_t>(g.node_count), false);
    std::vector<int> stack{g.root};
    reached[static_cast<std::size_t>(g.root)] = true;
    while (!stack.empty()) {
      int n = stack.back();
      stack.pop_back();
      for (int c : g.children(n)) {
        if (!reached[static_cast<std::size_t>(c)]) {
          reached[static_cast<std::size_t>(c)] = true;
          stack.push_back(c);
        }
      }
    }
    if (std::find(reached.begin(), reached.end(), false) != reached.end()) add("unreachable-node");
  }
  return v;
}

std::vector<std::pair<int, int>> canonical_edges(const CallGraph &g) {
  std::vector<int> perm(static_cast<std::size_t>(g.node_count));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::pair<int, int>> best;
  bool first = true;
  do {
    std::vector<std::pair<int, int>> relabeled;
    relabeled.reserve(g.edges.size());
    for (auto [a, b] : g.edges) {
      relabeled.emplace_back(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
    }
    std::sort(relabeled.begin(), relabeled.end());
    if (first || relabeled < best) {
      best = std::move(relabeled);
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

bool isomorphic(const CallGraph &a, const CallGraph &b) {
  if (a.node_count != b.node_count || a.edges.size() != b.edges.size()) return false;
  return canonical_edges(a) == canonical_edges(b);
}

}  // namespace callforge
