#include "callforge/composer.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "callforge/pylang.hpp"

namespace callforge {

bool node_candidate(const UnitProblem &p, UnitId unit, int in_degree) {
  if (!p.eligible || !p.signature || !p.unit || *p.unit != unit) return false;
  auto arity = static_cast<int>(p.signature->input_types.size());
  return in_degree == 0 ? arity >= 1 : arity == in_degree;
}

std::vector<std::string> check_assignment(const CallGraph &g, const ProblemBank &bank, const Assignment &a,
                                          std::optional<UnitId> unit) {
  std::vector<std::string> v;
  if (a.graph_id != g.id) v.push_back("assignment is for graph " + a.graph_id + ", not " + g.id);
  if (static_cast<int>(a.mapping.size()) != g.node_count) {
    v.push_back("mapping has " + std::to_string(a.mapping.size()) + " entries for " +
                std::to_string(g.node_count) + " nodes");
    return v;
  }
  std::vector<const UnitProblem *> probs;
  std::set<std::string> seen;
  for (int n = 0; n < g.node_count; ++n) {
    const auto &id = a.mapping[static_cast<std::size_t>(n)];
    const UnitProblem *p = bank.find(id);
    probs.push_back(p);
    if (p == nullptr) {
      v.push_back("node " + std::to_string(n) + ": unknown problem " + id);
      continue;
    }
    if (!seen.insert(id).second) v.push_back("problem " + id + " used more than once");
    if (!p->eligible || !p->signature) {
      v.push_back("node " + std::to_string(n) + ": problem " + id + " is not eligible");
      continue;
    }
    if (unit && (!p->unit || *p->unit != *unit)) {
      v.push_back("node " + std::to_string(n) + ": problem " + id + " is outside unit " + std::to_string(unit->index));
    }
    auto arity = static_cast<int>(p->signature->input_types.size());
    int indeg = g.in_degree(n);
    if (n != g.root && arity != indeg) {
      v.push_back("node " + std::to_string(n) + ": arity " + std::to_string(arity) + " != in-degree " +
                  std::to_string(indeg));
    }
    if (n == g.root && arity != static_cast<int>(p->arity())) {
      v.push_back("root problem signature arity differs from its examples");
    }
  }
  for (int n = 0; n < g.node_count; ++n) {
    const UnitProblem *child = probs[static_cast<std::size_t>(n)];
    if (child == nullptr || !child->signature) continue;
    auto ps = g.parents(n);
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const UnitProblem *parent = probs[static_cast<std::size_t>(ps[k])];
      if (parent == nullptr || !parent->signature) continue;
      if (k >= child->signature->input_types.size() ||
          parent->signature->output_type != child->signature->input_types[k]) {
        v.push_back("edge " + std::to_string(ps[k]) + "->" + std::to_string(n) + ": " +
                    std::string(to_string(parent->signature->output_type)) + " does not feed argument " +
                    std::to_string(k) + " of " + child->id);
      }
    }
  }
  return v;
}

// -- assignment space --------------------------------------------------------

AssignmentSpace::AssignmentSpace(const CallGraph &g, const ProblemBank &bank, UnitId unit)
    : graph_(g), bank_(&bank) {
  if (!validate_graph(g).empty()) throw std::invalid_argument("graph " + g.id + " is not a valid call graph");
  order_ = g.topological_order();
  parents_.resize(static_cast<std::size_t>(g.node_count));
  for (int v = 0; v < g.node_count; ++v) parents_[static_cast<std::size_t>(v)] = g.parents(v);

  std::vector<int> class_of(bank.problems.size(), -1);
  for (std::size_t i = 0; i < bank.problems.size(); ++i) {
    const auto &p = bank.problems[i];
    if (!p.eligible || !p.signature || !p.unit || *p.unit != unit) continue;
    auto it = std::find_if(classes_.begin(), classes_.end(),
                           [&](const SigClass &c) { return c.signature == *p.signature; });
    if (it == classes_.end()) {
      classes_.push_back({*p.signature, {}});
      it = classes_.end() - 1;
    }
    it->members.push_back(i);
    class_of[i] = static_cast<int>(it - classes_.begin());
  }
  node_classes_.resize(static_cast<std::size_t>(g.node_count));
  node_problems_.resize(static_cast<std::size_t>(g.node_count));
  for (int v = 0; v < g.node_count; ++v) {
    int indeg = g.in_degree(v);
    for (std::size_t c = 0; c < classes_.size(); ++c) {
      if (node_candidate(bank.problems[classes_[c].members.front()], unit, indeg)) {
        node_classes_[static_cast<std::size_t>(v)].push_back(static_cast<int>(c));
      }
    }
    for (std::size_t i = 0; i < bank.problems.size(); ++i) {
      if (class_of[i] >= 0 && node_candidate(bank.problems[i], unit, indeg)) {
        node_problems_[static_cast<std::size_t>(v)].push_back(i);
      }
    }
  }
  std::vector<int> chosen(static_cast<std::size_t>(g.node_count), -1);
  std::vector<int> used(classes_.size(), 0);
  auto total = count_from(0, chosen, used);
  if (total > std::numeric_limits<std::uint64_t>::max()) {
    throw std::overflow_error("assignment count for " + g.id + " exceeds 64 bits");
  }
  count_ = static_cast<std::uint64_t>(total);
}

bool AssignmentSpace::class_fits(std::size_t pos, int cls, const std::vector<int> &chosen) const {
  int v = order_[pos];
  const auto &ps = parents_[static_cast<std::size_t>(v)];
  const auto &sig = classes_[static_cast<std::size_t>(cls)].signature;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    int pc = chosen[static_cast<std::size_t>(ps[k])];
    if (classes_[static_cast<std::size_t>(pc)].signature.output_type != sig.input_types[k]) return false;
  }
  return true;
}

unsigned __int128 AssignmentSpace::count_from(std::size_t pos, std::vector<int> &chosen, std::vector<int> &used) const {
  if (pos == order_.size()) return 1;
  int v = order_[pos];
  unsigned __int128 total = 0;
  for (int c : node_classes_[static_cast<std::size_t>(v)]) {
    auto avail = static_cast<int>(classes_[static_cast<std::size_t>(c)].members.size()) - used[static_cast<std::size_t>(c)];
    if (avail <= 0 || !class_fits(pos, c, chosen)) continue;
    chosen[static_cast<std::size_t>(v)] = c;
    ++used[static_cast<std::size_t>(c)];
    total += static_cast<unsigned __int128>(avail) * count_from(pos + 1, chosen, used);
    --used[static_cast<std::size_t>(c)];
    chosen[static_cast<std::size_t>(v)] = -1;
  }
  return total;
}

Assignment AssignmentSpace::unrank(std::uint64_t index) const {
  if (index >= count_) throw std::out_of_range("assignment index out of range");
  Assignment a{graph_.id, std::vector<std::string>(static_cast<std::size_t>(graph_.node_count))};
  std::vector<int> chosen(static_cast<std::size_t>(graph_.node_count), -1);
  std::vector<int> used(classes_.size(), 0);
  std::vector<std::vector<bool>> taken(classes_.size());
  for (std::size_t c = 0; c < classes_.size(); ++c) taken[c].assign(classes_[c].members.size(), false);
  unsigned __int128 idx = index;
  for (std::size_t pos = 0; pos < order_.size(); ++pos) {
    int v = order_[pos];
    bool placed = false;
    for (int c : node_classes_[static_cast<std::size_t>(v)]) {
      auto cu = static_cast<std::size_t>(c);
      auto avail = static_cast<int>(classes_[cu].members.size()) - used[cu];
      if (avail <= 0 || !class_fits(pos, c, chosen)) continue;
      chosen[static_cast<std::size_t>(v)] = c;
      ++used[cu];
      auto rest = count_from(pos + 1, chosen, used);
      auto weight = static_cast<unsigned __int128>(avail) * rest;
      if (idx < weight) {
        auto slot = static_cast<std::size_t>(idx / rest);
        idx %= rest;
        for (std::size_t m = 0; m < taken[cu].size(); ++m) {
          if (taken[cu][m]) continue;
          if (slot-- == 0) {
            taken[cu][m] = true;
            a.mapping[static_cast<std::size_t>(v)] = bank_->problems[classes_[cu].members[m]].id;
            break;
          }
        }
        placed = true;
        break;
      }
      idx -= weight;
      --used[cu];
      chosen[static_cast<std::size_t>(v)] = -1;
    }
    if (!placed) throw std::logic_error("unrank walked off the assignment space");
  }
  return a;
}

Assignment AssignmentSpace::sample(std::uint64_t seed) const {
  if (count_ == 0) throw NoValidAssignment("no valid assignment for graph " + graph_.id);
  Rng rng(seed);
  return unrank(rng.below(count_));
}

std::vector<std::uint64_t> AssignmentSpace::sample_indices(std::uint64_t seed, std::uint64_t n) const {
  std::vector<std::uint64_t> out;
  if (n >= count_) {
    out.resize(static_cast<std::size_t>(count_));
    for (std::uint64_t i = 0; i < count_; ++i) out[static_cast<std::size_t>(i)] = i;
    return out;
  }
  // Floyd's algorithm: n distinct draws with n RNG calls.
  Rng rng(seed);
  std::set<std::uint64_t> picked;
  for (std::uint64_t j = count_ - n; j < count_; ++j) {
    std::uint64_t t = rng.below(j + 1);
    if (!picked.insert(t).second) picked.insert(j);
  }
  out.assign(picked.begin(), picked.end());
  return out;
}

AssignmentSpace::Iterator::Iterator(const AssignmentSpace &space)
    : space_(&space),
      cursor_(space.order_.size(), 0),
      used_(space.bank_->problems.size(), false) {
  if (space.order_.empty()) done_ = true;
}

bool AssignmentSpace::Iterator::fits(std::size_t depth, std::size_t candidate) const {
  int v = space_->order_[depth];
  const auto &cands = space_->node_problems_[static_cast<std::size_t>(v)];
  std::size_t pi = cands[candidate];
  if (used_[pi]) return false;
  const auto &sig = *space_->bank_->problems[pi].signature;
  const auto &ps = space_->parents_[static_cast<std::size_t>(v)];
  for (std::size_t k = 0; k < ps.size(); ++k) {
    // Parents precede v in topological order, so their cursors are settled.
    std::size_t ppos = static_cast<std::size_t>(
        std::find(space_->order_.begin(), space_->order_.end(), ps[k]) - space_->order_.begin());
    const auto &pc = space_->node_problems_[static_cast<std::size_t>(ps[k])];
    const auto &psig = *space_->bank_->problems[pc[cursor_[ppos]]].signature;
    if (psig.output_type != sig.input_types[k]) return false;
  }
  return true;
}

bool AssignmentSpace::Iterator::advance(std::size_t depth) {
  int v = space_->order_[depth];
  const auto &cands = space_->node_problems_[static_cast<std::size_t>(v)];
  while (cursor_[depth] < cands.size() && !fits(depth, cursor_[depth])) ++cursor_[depth];
  return cursor_[depth] < cands.size();
}

bool AssignmentSpace::Iterator::next(Assignment &out) {
  if (done_) return false;
  const std::size_t n = cursor_.size();
  auto problem_at = [&](std::size_t depth) {
    int v = space_->order_[depth];
    return space_->node_problems_[static_cast<std::size_t>(v)][cursor_[depth]];
  };
  std::ptrdiff_t d;
  if (!started_) {
    started_ = true;
    d = 0;
    cursor_[0] = 0;
  } else {
    d = static_cast<std::ptrdiff_t>(n) - 1;
    used_[problem_at(static_cast<std::size_t>(d))] = false;
    ++cursor_[static_cast<std::size_t>(d)];
  }
  while (true) {
    auto du = static_cast<std::size_t>(d);
    if (!advance(du)) {
      if (d == 0) {
        done_ = true;
        return false;
      }
      --d;
      used_[problem_at(static_cast<std::size_t>(d))] = false;
      ++cursor_[static_cast<std::size_t>(d)];
      continue;
    }
    used_[problem_at(du)] = true;
    if (du + 1 == n) break;
    ++d;
    cursor_[static_cast<std::size_t>(d)] = 0;
  }
  out.graph_id = space_->graph_.id;
  out.mapping.assign(n, {});
  for (std::size_t depth = 0; depth < n; ++depth) {
    out.mapping[static_cast<std::size_t>(space_->order_[depth])] = space_->bank_->problems[problem_at(depth)].id;
  }
  return true;
}

std::vector<Assignment> brute_force_assignments(const CallGraph &g, const ProblemBank &bank, UnitId unit) {
  std::vector<Assignment> out;
  Assignment a{g.id, std::vector<std::string>(static_cast<std::size_t>(g.node_count))};
  std::function<void(int)> rec = [&](int node) {
    if (node == g.node_count) {
      if (check_assignment(g, bank, a, unit).empty()) out.push_back(a);
      return;
    }
    for (const auto &p : bank.problems) {
      a.mapping[static_cast<std::size_t>(node)] = p.id;
      rec(node + 1);
    }
  };
  rec(0);
  return out;
}

std::uint64_t cell_seed(std::uint64_t master_seed, UnitId unit, std::string_view graph_id) {
  return hash_combine(hash_combine(master_seed, static_cast<std::uint64_t>(unit.index)), stable_hash(graph_id));
}

// -- serialization -------------------------------------------------------------

std::string_view to_string(GenerationVerdict::Status s) {
  switch (s) {
    case GenerationVerdict::Status::Pending: return "pending";
    case GenerationVerdict::Status::Valid: return "valid";
    case GenerationVerdict::Status::BadGeneration: return "bad_generation";
  }
  return "pending";
}

namespace {

Json literal_tuple(const ValueList &args) {
  Json j = Json::array();
  for (const auto &a : args) j.push_back(a.repr());
  return j;
}

ValueList parse_literal_tuple(const Json &j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of literals");
  ValueList out;
  for (const auto &x : j) {
    if (!x.is_string()) throw std::invalid_argument("literal must be a repr string");
    try {
      out.push_back(parse_literal(x.get<std::string>()));
    } catch (const LiteralError &e) {
      throw std::invalid_argument(e.what());
    }
  }
  return out;
}

}  // namespace

Json nested_to_json(const NestedProblem &np) {
  Json j;
  j["id"] = np.id;
  j["unit"] = np.unit.index;
  j["graph"] = np.graph_id;
  j["level"] = np.level.index;
  j["metric"] = np.metric;
  j["master_seed"] = np.master_seed;
  j["seed"] = np.seed;
  j["assignment_index"] = np.assignment_index;
  j["assignment"] = np.assignment.mapping;
  j["node_functions"] = np.node_functions;
  Json roots = Json::array();
  for (const auto &r : np.root_inputs) roots.push_back(literal_tuple(r));
  j["root_inputs"] = roots;
  j["reference_source"] = np.reference_source;
  if (!np.rendered_prompt.empty()) j["prompt"] = np.rendered_prompt;
  if (!np.traced.empty()) j["traced"] = np.traced;
  if (!np.testcases.empty()) {
    Json tcs = Json::array();
    for (const auto &tc : np.testcases) tcs.push_back({{"input", literal_tuple(tc.root_input)}, {"expected", tc.expected_repr}});
    j["testcases"] = tcs;
  }
  j["verdict"] = {{"status", std::string(to_string(np.verdict.status))}, {"reason", np.verdict.reason}};
  return j;
}

NestedProblem nested_from_json(const Json &j) {
  try {
    NestedProblem np;
    np.id = j.at("id").get<std::string>();
    np.unit = UnitId{j.at("unit").get<int>()};
    np.graph_id = j.at("graph").get<std::string>();
    np.level = LevelId{j.at("level").get<int>()};
    np.metric = j.at("metric").get<std::int64_t>();
    np.master_seed = j.at("master_seed").get<std::uint64_t>();
    np.seed = j.at("seed").get<std::uint64_t>();
    np.assignment_index = j.at("assignment_index").get<std::uint64_t>();
    np.assignment.graph_id = np.graph_id;
    np.assignment.mapping = j.at("assignment").get<std::vector<std::string>>();
    np.node_functions = j.at("node_functions").get<std::vector<std::string>>();
    for (const auto &r : j.at("root_inputs")) np.root_inputs.push_back(parse_literal_tuple(r));
    np.reference_source = j.at("reference_source").get<std::string>();
    if (j.contains("prompt")) np.rendered_prompt = j["prompt"].get<std::string>();
    if (j.contains("traced")) np.traced = j["traced"].get<std::vector<std::vector<std::string>>>();
    if (j.contains("testcases")) {
      for (const auto &tc : j["testcases"]) {
        np.testcases.push_back({parse_literal_tuple(tc.at("input")), tc.at("expected").get<std::string>()});
      }
    }
    if (j.contains("verdict")) {
      auto st = j["verdict"].at("status").get<std::string>();
      if (st == "valid") np.verdict.status = GenerationVerdict::Status::Valid;
      else if (st == "bad_generation") np.verdict.status = GenerationVerdict::Status::BadGeneration;
      else if (st == "pending") np.verdict.status = GenerationVerdict::Status::Pending;
      else throw std::invalid_argument("unknown verdict '" + st + "'");
      np.verdict.reason = j["verdict"].value("reason", "");
    }
    if (np.node_functions.size() != np.assignment.mapping.size()) {
      throw std::invalid_argument("node_functions and assignment differ in length");
    }
    return np;
  } catch (const nlohmann::json::exception &e) {
    throw std::invalid_argument(std::string("bad nested problem record: ") + e.what());
  }
}

// -- assembly ----------------------------------------------------------------------

namespace {

struct Binding {
  std::string name;
  std::string meaning;  // identical meanings may share one binding
  std::string import_module;  // set for imports
  std::string import_name;    // empty for `import module`
};

std::string import_line(const Binding &b, const std::string &bound) {
  if (b.import_name.empty()) {
    std::string head = b.import_module.substr(0, b.import_module.find('.'));
    return "import " + b.import_module + (bound == head ? "" : " as " + bound);
  }
  return "from " + b.import_module + " import " + b.import_name + (bound == b.import_name ? "" : " as " + bound);
}

// Renames free occurrences of top-level names and drops hoisted import lines.
std::string rewrite_source(std::string_view source, const std::map<std::string, std::string> &renames,
                           const std::set<int> &drop_lines) {
  auto tokens = py::tokenize(source);
  struct Edit {
    std::size_t begin, end;
    std::string text;
  };
  std::vector<Edit> edits;
  std::vector<bool> paren_is_def;  // one entry per open bracket; true for a def header
  std::vector<char> bracket;
  bool in_import = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto &t = tokens[i];
    if (t.kind == py::Tok::Newline) in_import = false;
    if (t.kind == py::Tok::Op) {
      if (t.text == "(" || t.text == "[" || t.text == "{") {
        bool is_def = t.text == "(" && i >= 2 && tokens[i - 2].kind == py::Tok::Name && tokens[i - 2].text == "def";
        bracket.push_back(t.text[0]);
        paren_is_def.push_back(is_def);
      } else if ((t.text == ")" || t.text == "]" || t.text == "}") && !bracket.empty()) {
        bracket.pop_back();
        paren_is_def.pop_back();
      }
      continue;
    }
    if (t.kind != py::Tok::Name) continue;
    if ((t.text == "import" || t.text == "from") &&
        (i == 0 || tokens[i - 1].kind == py::Tok::Newline || tokens[i - 1].kind == py::Tok::Indent ||
         tokens[i - 1].kind == py::Tok::Dedent)) {
      in_import = true;
    }
    auto it = renames.find(t.text);
    if (it == renames.end() || in_import) continue;
    if (i > 0 && tokens[i - 1].kind == py::Tok::Op && tokens[i - 1].text == ".") continue;
    bool kwarg = !bracket.empty() && bracket.back() == '(' && !paren_is_def.back() && i + 1 < tokens.size() &&
                 tokens[i + 1].kind == py::Tok::Op && tokens[i + 1].text == "=" && i > 0 &&
                 tokens[i - 1].kind == py::Tok::Op && (tokens[i - 1].text == "(" || tokens[i - 1].text == ",");
    if (kwarg) continue;
    edits.push_back({t.begin, t.end, it->second});
  }
  std::string out;
  std::size_t pos = 0;
  for (const auto &e : edits) {
    out.append(source.substr(pos, e.begin - pos));
    out += e.text;
    pos = e.end;
  }
  out.append(source.substr(pos));
  if (drop_lines.empty()) return out;
  std::string kept;
  int line = 1;
  std::size_t start = 0;
  while (start <= out.size()) {
    auto nl = out.find('\n', start);
    std::string_view piece(out.data() + start, (nl == std::string::npos ? out.size() : nl) - start);
    if (drop_lines.count(line) == 0) {
      kept.append(piece);
      if (nl != std::string::npos) kept += '\n';
    }
    if (nl == std::string::npos) break;
    start = nl + 1;
    ++line;
  }
  return kept;
}

// Physical lines spanned by top-level import statements.
std::set<int> import_lines(std::string_view source, const py::Module &m) {
  std::set<int> starts;
  for (const auto &s : m.body) {
    if (s->kind == py::Stmt::Kind::Import || s->kind == py::Stmt::Kind::ImportFrom) starts.insert(s->line);
  }
  std::set<int> lines;
  if (starts.empty()) return lines;
  auto tokens = py::tokenize(source);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (starts.count(tokens[i].line) == 0 || tokens[i].kind != py::Tok::Name ||
        (tokens[i].text != "import" && tokens[i].text != "from")) {
      continue;
    }
    int first = tokens[i].line;
    std::size_t j = i;
    while (j < tokens.size() && tokens[j].kind != py::Tok::Newline && tokens[j].kind != py::Tok::End) ++j;
    int last = j < tokens.size() ? tokens[j].line : first;
    for (int l = first; l <= last; ++l) lines.insert(l);
    starts.erase(first);
    i = j;
  }
  return lines;
}

std::string trim_block(std::string_view s) {
  // Drops leading and trailing blank lines but keeps indentation.
  std::size_t b = 0;
  while (b < s.size()) {
    auto nl = s.find('\n', b);
    std::string_view line = s.substr(b, nl == std::string_view::npos ? std::string_view::npos : nl - b);
    if (!trim(line).empty() || nl == std::string_view::npos) break;
    b = nl + 1;
  }
  std::size_t e = s.size();
  while (e > b && (s[e - 1] == '\n' || s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

AssembledProgram assemble_reference_code(const CallGraph &g, const ProblemBank &bank, const Assignment &a) {
  if (static_cast<int>(a.mapping.size()) != g.node_count) throw CompositionError("assignment does not cover the graph");
  auto order = g.topological_order();
  if (order.empty()) throw CompositionError("graph " + g.id + " has no topological order");

  std::vector<const UnitProblem *> probs;
  for (const auto &id : a.mapping) {
    const UnitProblem *p = bank.find(id);
    if (p == nullptr) throw CompositionError("unknown problem " + id);
    probs.push_back(p);
  }
  const std::size_t root_arity = probs[static_cast<std::size_t>(g.root)]->arity();

  std::map<std::string, std::string> taken;  // name -> meaning
  taken["main"] = "main";
  for (std::size_t i = 0; i < root_arity; ++i) taken["arg" + std::to_string(i)] = "main";
  for (int v = 0; v < g.node_count; ++v) taken["out_n" + std::to_string(v)] = "main";

  std::vector<std::string> hoisted;
  std::vector<std::string> bodies(static_cast<std::size_t>(g.node_count));
  AssembledProgram prog;
  prog.node_functions.resize(static_cast<std::size_t>(g.node_count));

  for (int v : order) {
    const UnitProblem &p = *probs[static_cast<std::size_t>(v)];
    std::shared_ptr<const py::Module> module;
    try {
      module = py::parse_module(p.solution_source);
    } catch (const py::ParseError &e) {
      throw CompositionError("solution of " + p.id + " does not parse: " + e.diagnostic().to_string());
    }
    std::vector<Binding> bindings;
    for (const auto &s : module->body) {
      if (s->kind == py::Stmt::Kind::Import) {
        for (const auto &[mod, as] : s->imports) bindings.push_back({as, "import " + mod, mod, ""});
      } else if (s->kind == py::Stmt::Kind::ImportFrom) {
        for (const auto &[name, as] : s->imports) {
          bindings.push_back({as, "from " + s->name + " import " + name, s->name, name});
        }
      }
    }
    for (const auto &name : py::top_level_names(*module).defined) {
      bindings.push_back({name, "node " + std::to_string(v), "", ""});
    }
    std::map<std::string, std::string> renames;
    for (const auto &b : bindings) {
      std::string bound = b.name;
      auto it = taken.find(bound);
      if (it != taken.end() && it->second == b.meaning && !b.import_module.empty()) continue;  // shared import
      if (it != taken.end()) {
        const std::string suffix = "_n" + std::to_string(v);
        do {
          bound += suffix;
        } while (taken.count(bound) != 0);
        renames[b.name] = bound;
      }
      taken[bound] = b.meaning;
      if (!b.import_module.empty()) hoisted.push_back(import_line(b, bound));
    }
    bodies[static_cast<std::size_t>(v)] =
        trim_block(rewrite_source(p.solution_source, renames, import_lines(p.solution_source, *module)));
    auto rn = renames.find(p.entry_point);
    prog.node_functions[static_cast<std::size_t>(v)] = rn == renames.end() ? p.entry_point : rn->second;
  }

  std::ostringstream src;
  for (const auto &line : hoisted) src << line << "\n";
  if (!hoisted.empty()) src << "\n\n";
  for (int v : order) src << bodies[static_cast<std::size_t>(v)] << "\n\n\n";
  src << "def main(";
  for (std::size_t i = 0; i < root_arity; ++i) src << (i ? ", " : "") << "arg" << i;
  src << "):\n";
  for (int v : order) {
    src << "    out_n" << v << " = " << prog.node_functions[static_cast<std::size_t>(v)] << "(";
    if (v == g.root) {
      for (std::size_t i = 0; i < root_arity; ++i) src << (i ? ", " : "") << "arg" << i;
    } else {
      auto ps = g.parents(v);
      for (std::size_t k = 0; k < ps.size(); ++k) src << (k ? ", " : "") << "out_n" << ps[k];
    }
    src << ")\n";
  }
  auto sinks = g.sinks();
  if (sinks.size() == 1) {
    src << "    return out_n" << sinks.front() << "\n";
  } else {
    src << "    return (";
    for (std::size_t i = 0; i < sinks.size(); ++i) src << (i ? ", " : "") << "out_n" << sinks[i];
    src << ")\n";
  }
  prog.source = src.str();
  return prog;
}

// -- prompt rendering --------------------------------------------------------------

std::string strip_assertions(std::string_view prompt) {
  std::string out;
  std::size_t start = 0;
  while (start <= prompt.size()) {
    auto nl = prompt.find('\n', start);
    std::string_view line = prompt.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    std::string t = trim(line);
    if (!(t.rfind("assert ", 0) == 0 || t == "assert")) {
      out.append(line);
      out += '\n';
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return trim_block(out);
}

namespace {

std::string join_refs(const std::vector<std::string> &refs) {
  std::string s;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (i > 0) s += (i + 1 == refs.size()) ? " and " : ", ";
    s += refs[i];
  }
  return s;
}

}  // namespace

std::string render_prompt(const CallGraph &g, const ProblemBank &bank, const NestedProblem &np, std::size_t example) {
  if (example >= np.root_inputs.size() || example >= np.traced.size()) {
    throw CompositionError("no traced values for example " + std::to_string(example) + " of " + np.id);
  }
  const auto &traced = np.traced[example];
  if (static_cast<int>(traced.size()) != g.node_count) throw CompositionError("traced values do not cover every node");
  for (int v = 0; v < g.node_count; ++v) {
    if (traced[static_cast<std::size_t>(v)].empty()) {
      throw CompositionError("missing traced value for node " + std::to_string(v) + " of " + np.id);
    }
  }
  auto order = g.topological_order();
  std::vector<int> number(static_cast<std::size_t>(g.node_count));
  for (std::size_t i = 0; i < order.size(); ++i) number[static_cast<std::size_t>(order[i])] = static_cast<int>(i) + 1;
  auto ref = [&](int v) {
    return "PROMPT " + std::to_string(number[static_cast<std::size_t>(v)]) + ": " + np.node_functions[static_cast<std::size_t>(v)];
  };

  const std::size_t n = order.size();
  std::ostringstream out;
  out << "Here are " << n << " prompts that are used to generate " << n << " functions respectively.\n\n";
  for (int v : order) {
    const UnitProblem *p = bank.find(np.assignment.mapping[static_cast<std::size_t>(v)]);
    if (p == nullptr) throw CompositionError("unknown problem " + np.assignment.mapping[static_cast<std::size_t>(v)]);
    std::vector<std::string> args;
    if (v == g.root) {
      for (const auto &a : np.root_inputs[example]) args.push_back(a.repr());
    } else {
      for (int parent : g.parents(v)) args.push_back(traced[static_cast<std::size_t>(parent)]);
    }
    std::string call = np.node_functions[static_cast<std::size_t>(v)] + "(";
    for (std::size_t i = 0; i < args.size(); ++i) call += (i ? ", " : "") + args[i];
    call += ")";
    out << "PROMPT " << number[static_cast<std::size_t>(v)] << ":\n\"\"\"\n"
        << strip_assertions(p->prompt) << "\n"
        << "assert " << call << " == " << traced[static_cast<std::size_t>(v)] << "\n\"\"\"\n\n";
  }
  out << "Please write the above " << n << " functions respectively and write a new function named main to call the above "
      << n << " functions.\n\n";
  out << "When calling these functions, please follow the following rules:\n\n";
  out << "The input of the main function equals the input of PROMPT " << number[static_cast<std::size_t>(g.root)] << " :"
      << np.node_functions[static_cast<std::size_t>(g.root)] << ".\n\n";
  for (int v : order) {
    auto ps = g.parents(v);
    if (ps.size() == 1) {
      out << "The output of function " << ref(ps.front()) << " serves as the input of " << ref(v) << ".\n\n";
    } else if (ps.size() > 1) {
      std::vector<std::string> refs;
      for (int p : ps) refs.push_back(ref(p));
      out << "The outputs of function " << join_refs(refs) << " serve as the inputs of " << ref(v)
          << ", in that order.\n\n";
    }
  }
  auto sinks = g.sinks();
  if (sinks.size() == 1) {
    out << "The main function returns the output of the " << ref(sinks.front()) << ".\n";
  } else {
    std::vector<std::string> refs;
    for (int s : sinks) refs.push_back(ref(s));
    out << "The main function returns the outputs of " << join_refs(refs) << " as a tuple, in that order.\n";
  }
  return out.str();
}

NestedProblem make_draft(const CallGraph &g, const ProblemBank &bank, const Assignment &a, UnitId unit,
                         const LevelThresholds &betas) {
  NestedProblem np;
  np.unit = unit;
  np.graph_id = g.id;
  auto f = graph_features(g);
  np.metric = f.metric;
  np.level = classify_level(f.metric, betas);
  np.assignment = a;
  auto prog = assemble_reference_code(g, bank, a);
  np.reference_source = std::move(prog.source);
  np.node_functions = std::move(prog.node_functions);
  const UnitProblem *root = bank.find(a.mapping[static_cast<std::size_t>(g.root)]);
  for (const auto &ex : root->examples) np.root_inputs.push_back(ex.args);
  return np;
}

std::vector<NestedProblem> generate_drafts(const ProblemBank &bank, const GenerationRequest &req) {
  std::vector<UnitId> units = req.units;
  if (units.empty()) {
    for (int u = 1; u <= req.alphas.n_units(); ++u) units.push_back(UnitId{u});
  }
  std::vector<const CallGraph *> graphs;
  if (req.graph_ids.empty()) {
    for (const auto &g : catalog()) graphs.push_back(&g);
  } else {
    for (const auto &id : req.graph_ids) {
      const CallGraph *g = find_graph(id);
      if (g == nullptr) throw std::invalid_argument("unknown graph '" + id + "'");
      graphs.push_back(g);
    }
  }
  struct Cell {
    UnitId unit;
    const CallGraph *graph;
    std::vector<NestedProblem> drafts;
  };
  std::vector<Cell> cells;
  for (auto u : units) {
    for (const auto *g : graphs) cells.push_back({u, g, {}});
  }
  parallel_for(cells.size(), req.workers, [&](std::size_t i) {
    Cell &cell = cells[i];
    AssignmentSpace space(*cell.graph, bank, cell.unit);
    if (space.count() == 0) return;
    const std::uint64_t seed = cell_seed(req.master_seed, cell.unit, cell.graph->id);
    auto indices = space.sample_indices(seed, req.count);
    std::size_t k = 0;
    for (auto idx : indices) {
      NestedProblem np = make_draft(*cell.graph, bank, space.unrank(idx), cell.unit, req.betas);
      char num[16];
      std::snprintf(num, sizeof num, "%04zu", k++);
      np.id = cell.graph->id + "-U" + std::to_string(cell.unit.index) + "-s" + std::to_string(req.master_seed) + "-" + num;
      np.master_seed = req.master_seed;
      np.seed = seed;
      np.assignment_index = idx;
      cell.drafts.push_back(std::move(np));
    }
  });
  std::vector<NestedProblem> out;
  for (auto &c : cells) {
    for (auto &d : c.drafts) out.push_back(std::move(d));
  }
  return out;
}

ComplexityMatrix bucket_matrix(const std::vector<NestedProblem> &problems, int n_units, int n_levels) {
  ComplexityMatrix m;
  m.n_units = n_units;
  m.n_levels = n_levels;
  m.members.assign(static_cast<std::size_t>(n_units), std::vector<std::vector<std::string>>(static_cast<std::size_t>(n_levels)));
  for (const auto &np : problems) {
    if (np.unit.index < 1 || np.unit.index > n_units || np.level.index < 1 || np.level.index > n_levels) {
      throw std::out_of_range("problem " + np.id + " falls outside the matrix");
    }
    m.members[static_cast<std::size_t>(np.unit.index - 1)][static_cast<std::size_t>(np.level.index - 1)].push_back(np.id);
  }
  return m;
}

}  // namespace callforge
