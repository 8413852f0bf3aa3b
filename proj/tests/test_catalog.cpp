#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "callforge/graph_catalog.hpp"
#include "oracles.hpp"

using namespace callforge;
using callforge::testing::same_shape;

namespace {

// Longest path in edges, by exhaustive DFS from the root.
int longest_path(const CallGraph &g) {
  std::function<int(int)> depth = [&](int v) {
    int best = 0;
    for (const auto &[a, b] : g.edges) {
      if (a == v) best = std::max(best, 1 + depth(b));
    }
    return best;
  };
  return depth(g.root);
}

std::int64_t metric_by_hand(const CallGraph &g) {
  std::vector<int> out(static_cast<std::size_t>(g.node_count)), in(static_cast<std::size_t>(g.node_count));
  for (const auto &[a, b] : g.edges) {
    ++out[static_cast<std::size_t>(a)];
    ++in[static_cast<std::size_t>(b)];
  }
  int branches = 0;
  for (int v = 0; v < g.node_count; ++v) {
    branches += out[static_cast<std::size_t>(v)] >= 2 ? 1 : 0;
    branches += in[static_cast<std::size_t>(v)] >= 2 ? 1 : 0;
  }
  return static_cast<std::int64_t>(longest_path(g)) * std::max(1, branches) * static_cast<std::int64_t>(g.edges.size());
}

CallGraph make(std::string id, int n, std::vector<std::pair<int, int>> edges) {
  CallGraph g;
  g.id = std::move(id);
  g.node_count = n;
  g.edges = std::move(edges);
  return g;
}

}  // namespace

TEST_CASE("catalog has sixteen valid, distinct shapes") {
  const auto &cat = catalog();
  REQUIRE(cat.size() == 16);
  for (std::size_t i = 0; i < cat.size(); ++i) {
    CHECK(cat[i].id == "G" + std::to_string(i + 1));
    CHECK_MESSAGE(validate_graph(cat[i]).empty(), cat[i].id);
    CHECK(cat[i].node_count <= 5);
    CHECK(cat[i].topological_order().front() == cat[i].root);
    for (std::size_t j = i + 1; j < cat.size(); ++j) {
      CHECK_MESSAGE(!same_shape(cat[i], cat[j]), cat[i].id << " vs " << cat[j].id);
      CHECK(!isomorphic(cat[i], cat[j]));
    }
  }
}

TEST_CASE("metric matches a hand computation") {
  for (const auto &g : catalog()) {
    auto f = graph_features(g);
    CHECK_MESSAGE(f.metric == metric_by_hand(g), g.id);
    CHECK(f.metric == static_cast<std::int64_t>(f.l_max) * f.b * f.e_count);
  }
  auto f9 = graph_features(*find_graph("G9"));
  CHECK(f9.l_max == 2);
  CHECK(f9.b == 2);
  CHECK(f9.e_count == 4);
  CHECK(f9.metric == 16);
}

TEST_CASE("default levels are all populated") {
  LevelThresholds betas;
  CHECK(betas.betas() == std::vector<int>{1, 4, 9, 16});
  std::map<int, std::vector<std::string>> levels;
  for (const auto &g : catalog()) levels[classify_level(graph_features(g).metric, betas).index].push_back(g.id);
  REQUIRE(levels.size() == 4);
  for (const auto &[l, ids] : levels) CHECK_MESSAGE(!ids.empty(), "L" << l);
  CHECK(classify_level(1, betas).index == 1);
  CHECK(classify_level(4, betas).index == 1);
  CHECK(classify_level(5, betas).index == 2);
  CHECK(classify_level(16, betas).index == 3);
  CHECK(classify_level(17, betas).index == 4);
}

TEST_CASE("chain metrics strictly increase with length") {
  std::vector<std::pair<int, std::int64_t>> chains;
  for (const auto &g : catalog()) {
    auto f = graph_features(g);
    if (f.b == 1 && f.l_max == static_cast<int>(g.edges.size())) chains.emplace_back(g.node_count, f.metric);
  }
  std::sort(chains.begin(), chains.end());
  REQUIRE(chains.size() == 4);
  for (std::size_t i = 1; i < chains.size(); ++i) CHECK(chains[i].second > chains[i - 1].second);
}

TEST_CASE("graph validation names each violation") {
  auto has = [](const CallGraph &g, const std::string &what) {
    auto v = validate_graph(g);
    return std::find(v.begin(), v.end(), what) != v.end();
  };
  CHECK(has(make("x", 6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}}), "too-many-nodes"));
  CHECK(has(make("x", 0, {}), "no-nodes"));
  CHECK(has(make("x", 2, {{0, 7}}), "bad-endpoint"));
  CHECK(has(make("x", 2, {{0, 1}, {1, 1}}), "self-loop"));
  CHECK(has(make("x", 2, {{0, 1}, {0, 1}}), "duplicate-edge"));
  CHECK(has(make("x", 3, {{0, 1}, {1, 2}, {2, 1}}), "cycle"));
  CHECK(has(make("x", 3, {{0, 2}, {1, 2}}), "multiple-roots"));
  CHECK(has(make("x", 3, {{0, 1}}), "multiple-roots"));
  CHECK(validate_graph(make("x", 1, {})).empty());
}

TEST_CASE("node accessors") {
  const CallGraph &g = *find_graph("G16");
  CHECK(g.parents(4) == std::vector<int>{1, 2});
  CHECK(g.children(1) == std::vector<int>{3, 4});
  CHECK(g.sinks() == std::vector<int>{3, 4});
  CHECK(g.topological_order() == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(find_graph("G17") == nullptr);
  CHECK(LevelThresholds::parse("1,5").n_levels() == 2);
  CHECK_THROWS(LevelThresholds::parse("2,5"));
  CHECK_THROWS(LevelThresholds::parse("5,2"));
}
