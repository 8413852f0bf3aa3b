#include "callforge/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "callforge/graph_catalog.hpp"

namespace callforge {

std::optional<Dispersion> dispersion(const std::vector<double> &values) {
  if (values.empty()) return std::nullopt;
  double sum = 0;
  for (double v : values) sum += v;
  Dispersion d;
  d.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0;
    for (double v : values) sq += (v - d.mean) * (v - d.mean);
    d.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return d;
}

namespace {

double mean_of(const std::vector<double> &v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string fmt(const std::optional<double> &v) { return v ? fmt(*v) : "n/a"; }

int graph_order(const std::string &id) {
  const auto &cat = catalog();
  for (std::size_t i = 0; i < cat.size(); ++i) {
    if (cat[i].id == id) return static_cast<int>(i);
  }
  return static_cast<int>(cat.size());
}

bool graph_less(const std::string &a, const std::string &b) {
  int oa = graph_order(a), ob = graph_order(b);
  return oa != ob ? oa < ob : a < b;
}

struct ProblemKey {
  std::uint64_t seed;
  int unit;
  std::string graph;
  int level;
  std::string id;
  auto operator<=>(const ProblemKey &) const = default;
};

}  // namespace

Report summarize(const SummaryInput &in) {
  Report rep;
  rep.config_hash = in.config_hash;
  rep.k = in.k;

  // Per-problem pass@k from its evaluated samples.
  std::map<ProblemKey, std::pair<int, int>> tallies;  // (n, c)
  std::set<std::uint64_t> seen_seeds(in.seeds.begin(), in.seeds.end());
  for (const auto &r : in.results) {
    seen_seeds.insert(r.master_seed);
    if (!r.evaluated) continue;
    auto &t = tallies[{r.master_seed, r.unit.index, r.graph_id, r.level.index, r.problem_id}];
    ++t.first;
    if (r.solved) ++t.second;
  }
  rep.seeds.assign(seen_seeds.begin(), seen_seeds.end());

  // cell[(seed, unit, graph)] -> per-problem scores
  std::map<std::tuple<std::uint64_t, int, std::string>, std::vector<double>> cells;
  std::map<std::pair<int, int>, std::vector<double>> level_cells;
  std::map<std::string, int> graph_levels;
  std::map<int, std::set<std::string>> unit_problems;
  for (const auto &[key, t] : tallies) {
    if (t.first < in.k) continue;
    double score = 100.0 * pass_at_k(t.first, t.second, in.k);
    cells[{key.seed, key.unit, key.graph}].push_back(score);
    level_cells[{key.unit, key.level}].push_back(score);
    graph_levels[key.graph] = key.level;
    unit_problems[key.unit].insert(key.id);
  }

  for (int u = 1; u <= in.n_units; ++u) {
    UnitRow row;
    row.unit = u;
    row.problems = unit_problems[u].size();
    std::vector<double> seed_scores;
    for (auto seed : rep.seeds) {
      std::vector<double> graph_scores;
      for (const auto &[key, scores] : cells) {
        if (std::get<0>(key) == seed && std::get<1>(key) == u) graph_scores.push_back(mean_of(scores));
      }
      if (graph_scores.empty()) continue;
      row.per_seed[seed] = mean_of(graph_scores);
      seed_scores.push_back(row.per_seed[seed]);
    }
    row.score = dispersion(seed_scores);
    rep.units.push_back(std::move(row));
  }

  std::vector<std::string> graph_ids;
  for (const auto &[g, lvl] : graph_levels) graph_ids.push_back(g);
  std::sort(graph_ids.begin(), graph_ids.end(), graph_less);
  for (const auto &g : graph_ids) {
    GraphRow row;
    row.graph_id = g;
    row.level = graph_levels[g];
    std::vector<double> unit_scores;
    for (int u = 1; u <= in.n_units; ++u) {
      std::vector<double> seed_scores;
      for (const auto &[key, scores] : cells) {
        if (std::get<1>(key) == u && std::get<2>(key) == g) seed_scores.push_back(mean_of(scores));
      }
      if (seed_scores.empty()) continue;
      row.per_unit[u] = mean_of(seed_scores);
      unit_scores.push_back(row.per_unit[u]);
    }
    if (!unit_scores.empty()) row.average = mean_of(unit_scores);
    rep.graphs.push_back(std::move(row));
  }

  for (int u = 1; u <= in.n_units; ++u) {
    ErrorRow row;
    row.unit = u;
    for (const auto &r : in.results) {
      if (r.unit.index != u || !r.evaluated || r.solved) continue;
      ++row.failed;
      auto cat = r.ability.value_or(AbilityCategory::Other);
      ++row.counts[static_cast<std::size_t>(cat)];
    }
    rep.errors.push_back(row);
  }

  std::map<std::pair<int, int>, std::size_t> bench_counts;
  for (const auto &np : in.bench) {
    if (np.verdict.status == GenerationVerdict::Status::Valid) ++bench_counts[{np.unit.index, np.level.index}];
  }
  for (int u = 1; u <= in.n_units; ++u) {
    for (int l = 1; l <= in.n_levels; ++l) {
      MatrixCell c;
      c.unit = u;
      c.level = l;
      c.problems = bench_counts[{u, l}];
      if (auto it = level_cells.find({u, l}); it != level_cells.end()) c.score = mean_of(it->second);
      rep.matrix.push_back(c);
    }
  }
  rep.sizes = in.sizes;
  return rep;
}

std::string render_size_table(const SizeTable &t) {
  std::ostringstream out;
  out << "| Unit |";
  for (const auto &g : t.graph_ids) out << ' ' << g << " |";
  out << " Total |\n|---|";
  for (std::size_t i = 0; i <= t.graph_ids.size(); ++i) out << "---|";
  out << '\n';
  for (std::size_t r = 0; r < t.units.size(); ++r) {
    out << "| U" << t.units[r] << " |";
    for (auto c : t.counts[r]) out << ' ' << c << " |";
    out << ' ' << t.unit_totals[r] << " |\n";
  }
  out << "| Total |";
  for (std::size_t c = 0; c < t.graph_ids.size(); ++c) {
    std::uint64_t col = 0;
    for (std::size_t r = 0; r < t.units.size(); ++r) col += t.counts[r][c];
    out << ' ' << col << " |";
  }
  out << ' ' << t.total << " |\n";
  return out.str();
}

std::string render_report(const Report &r) {
  std::ostringstream out;
  out << "# Benchmark report\n\n";
  out << "seeds: ";
  for (std::size_t i = 0; i < r.seeds.size(); ++i) out << (i ? ", " : "") << r.seeds[i];
  if (r.seeds.empty()) out << "none";
  out << "\nconfig: " << (r.config_hash.empty() ? "unknown" : r.config_hash) << "\nmetric: Pass@" << r.k << " (%)\n\n";

  out << "## Per-unit Pass@" << r.k << "\n\n| Unit | Problems | Mean | Std |";
  for (auto s : r.seeds) out << " seed " << s << " |";
  out << "\n|---|---|---|---|";
  for (std::size_t i = 0; i < r.seeds.size(); ++i) out << "---|";
  out << '\n';
  for (const auto &u : r.units) {
    out << "| U" << u.unit << " | " << u.problems << " | ";
    if (u.score) {
      out << fmt(u.score->mean) << " | " << fmt(u.score->std) << " |";
    } else {
      out << "n/a | n/a |";
    }
    for (auto s : r.seeds) {
      auto it = u.per_seed.find(s);
      out << ' ' << (it == u.per_seed.end() ? std::string("n/a") : fmt(it->second)) << " |";
    }
    out << '\n';
  }

  int n_units = static_cast<int>(r.units.size());
  out << "\n## Per-graph Pass@" << r.k << "\n\n| Graph | Level |";
  for (int u = 1; u <= n_units; ++u) out << " U" << u << " |";
  out << " Average |\n|---|---|";
  for (int u = 0; u <= n_units; ++u) out << "---|";
  out << '\n';
  for (const auto &g : r.graphs) {
    out << "| " << g.graph_id << " | L" << g.level << " |";
    for (int u = 1; u <= n_units; ++u) {
      auto it = g.per_unit.find(u);
      out << ' ' << (it == g.per_unit.end() ? std::string("n/a") : fmt(it->second)) << " |";
    }
    out << ' ' << fmt(g.average) << " |\n";
  }

  static constexpr AbilityCategory kCats[] = {AbilityCategory::ProblemUnderstanding,
                                              AbilityCategory::CodePatternGeneration,
                                              AbilityCategory::ContextManagement, AbilityCategory::Other};
  out << "\n## Error categories\n\n| Unit | Failed |";
  for (auto c : kCats) out << ' ' << to_string(c) << " |";
  out << "\n|---|---|---|---|---|---|\n";
  for (const auto &e : r.errors) {
    out << "| U" << e.unit << " | " << e.failed << " |";
    for (auto c : kCats) {
      auto n = e.counts[static_cast<std::size_t>(c)];
      out << ' ' << n << " (";
      out << (e.failed ? fmt(100.0 * static_cast<double>(n) / static_cast<double>(e.failed)) + "%" : std::string("n/a"));
      out << ") |";
    }
    out << '\n';
  }

  int n_levels = 0;
  for (const auto &c : r.matrix) n_levels = std::max(n_levels, c.level);
  out << "\n## Complexity matrix (problems / Pass@" << r.k << ")\n\n| Unit |";
  for (int l = 1; l <= n_levels; ++l) out << " L" << l << " |";
  out << "\n|---|";
  for (int l = 1; l <= n_levels; ++l) out << "---|";
  out << '\n';
  for (int u = 1; u <= n_units; ++u) {
    out << "| U" << u << " |";
    for (const auto &c : r.matrix) {
      if (c.unit == u) out << ' ' << c.problems << " / " << fmt(c.score) << " |";
    }
    out << '\n';
  }

  if (r.sizes) out << "\n## Benchmark size\n\n" << render_size_table(*r.sizes);
  return out.str();
}

SizeTable count_benchmark_space(const ProblemBank &bank, const std::vector<CallGraph> &graphs, int n_units) {
  SizeTable t;
  for (const auto &g : graphs) t.graph_ids.push_back(g.id);
  for (int u = 1; u <= n_units; ++u) {
    t.units.push_back(u);
    std::vector<std::uint64_t> row;
    std::uint64_t total = 0;
    for (const auto &g : graphs) {
      std::uint64_t n = AssignmentSpace(g, bank, UnitId{u}).count();
      row.push_back(n);
      total += n;
    }
    t.counts.push_back(std::move(row));
    t.unit_totals.push_back(total);
    t.total += total;
  }
  return t;
}

}  // namespace callforge
