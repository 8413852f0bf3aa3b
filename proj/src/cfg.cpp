#include "callforge/cfg.hpp"

#include <charconv>
#include <stdexcept>

namespace callforge {

using py::Expr;
using py::Stmt;

int ControlFlowGraph::out_degree(int node) const {
  int d = 0;
  for (const auto &[from, to] : edges) d += from == node ? 1 : 0;
  return d;
}

int ControlFlowGraph::in_degree(int node) const {
  int d = 0;
  for (const auto &[from, to] : edges) d += to == node ? 1 : 0;
  return d;
}

std::vector<std::string> ControlFlowGraph::violations() const {
  std::vector<std::string> out;
  const int n = static_cast<int>(nodes.size());
  for (const auto &[from, to] : edges) {
    if (from < 0 || from >= n || to < 0 || to >= n) {
      out.push_back("edge endpoint is not a declared node");
      break;
    }
  }
  if (entry < 0 || entry >= n || exit < 0 || exit >= n) {
    out.push_back("entry or exit is not a declared node");
    return out;
  }
  if (in_degree(entry) != 0) out.push_back("entry block has predecessors");
  if (out_degree(exit) != 0) out.push_back("exit block has successors");
  if (in_degree(exit) == 0) out.push_back("exit block is unreachable");
  if (components < 1) out.push_back("component count must be positive");
  return out;
}

namespace {

class CfgBuilder {
 public:
  ControlFlowGraph build(const Stmt &def) {
    cfg_.nodes.clear();
    cfg_.edges.clear();
    cfg_.entry = new_block("entry", def.line);
    cfg_.exit = new_block("exit", def.line);
    exits_.push_back(cfg_.exit);
    // Parameter defaults are evaluated at definition time, not in the body.
    current_ = cfg_.entry;
    lower_block(def.body);
    if (current_ >= 0) edge(current_, cfg_.exit);
    exits_.pop_back();
    cfg_.components = 1;
    return std::move(cfg_);
  }

 private:
  struct Loop {
    int head;
    int after;
  };

  int new_block(std::string label, int line) {
    int id = static_cast<int>(cfg_.nodes.size());
    cfg_.nodes.push_back(BasicBlock{id, std::move(label), line, 0});
    return id;
  }

  void edge(int from, int to) { cfg_.edges.emplace_back(from, to); }

  // Statements after return/break/continue still need a block; it simply has
  // no predecessors.
  int ensure_current(int line) {
    if (current_ < 0) current_ = new_block("unreachable", line);
    return current_;
  }

  void append_statement(int line) {
    auto &b = cfg_.nodes[static_cast<std::size_t>(ensure_current(line))];
    if (b.statement_count == 0) b.first_line = line;
    ++b.statement_count;
  }

  // Value-context boolean operators: each short-circuit operand after the
  // first is evaluated in its own block that rejoins.
  void lower_value(const Expr *e) {
    if (e == nullptr) return;
    if (e->kind == Expr::Kind::BoolOp) {
      lower_value(e->values.front().get());
      for (std::size_t i = 1; i < e->values.size(); ++i) {
        int from = ensure_current(e->line);
        int rhs = new_block(e->is_and ? "and-rhs" : "or-rhs", e->values[i]->line);
        int join = new_block("bool-join", e->line);
        edge(from, rhs);
        edge(from, join);
        current_ = rhs;
        lower_value(e->values[i].get());
        edge(current_, join);
        current_ = join;
      }
      return;
    }
    lower_value(e->left.get());
    lower_value(e->right.get());
    lower_value(e->step.get());
    for (const auto &x : e->elts) lower_value(x.get());
    for (const auto &x : e->values) lower_value(x.get());
    for (const auto &x : e->args) lower_value(x.get());
    for (const auto &kv : e->kwargs) lower_value(kv.second.get());
  }

  // Condition context: branch straight to the targets with short-circuiting.
  void lower_condition(const Expr &e, int on_true, int on_false) {
    if (e.kind == Expr::Kind::UnaryOp && e.unop == py::UnaryKind::Not) {
      lower_condition(*e.left, on_false, on_true);
      return;
    }
    if (e.kind == Expr::Kind::BoolOp) {
      for (std::size_t i = 0; i + 1 < e.values.size(); ++i) {
        int next = new_block(e.is_and ? "and-rhs" : "or-rhs", e.values[i + 1]->line);
        if (e.is_and) {
          lower_condition(*e.values[i], next, on_false);
        } else {
          lower_condition(*e.values[i], on_true, next);
        }
        current_ = next;
      }
      lower_condition(*e.values.back(), on_true, on_false);
      return;
    }
    lower_value(&e);
    int from = ensure_current(e.line);
    edge(from, on_true);
    edge(from, on_false);
    current_ = -1;
  }

  void lower_block(const py::Block &body) {
    for (const auto &s : body) lower_statement(*s);
  }

  void lower_statement(const Stmt &s) {
    switch (s.kind) {
      case Stmt::Kind::Return:
      case Stmt::Kind::Raise:
        append_statement(s.line);
        lower_value(s.value.get());
        edge(ensure_current(s.line), exits_.back());
        current_ = -1;
        return;
      case Stmt::Kind::Break:
        append_statement(s.line);
        if (!loops_.empty()) edge(current_, loops_.back().after);
        current_ = -1;
        return;
      case Stmt::Kind::Continue:
        append_statement(s.line);
        if (!loops_.empty()) edge(current_, loops_.back().head);
        current_ = -1;
        return;
      case Stmt::Kind::Assert: {
        append_statement(s.line);
        int pass = new_block("assert-pass", s.line);
        int fail = new_block("assert-fail", s.line);
        lower_condition(*s.value, pass, fail);
        current_ = fail;
        lower_value(s.message.get());
        edge(fail, exits_.back());
        current_ = pass;
        return;
      }
      case Stmt::Kind::If: lower_if(s); return;
      case Stmt::Kind::While: lower_while(s); return;
      case Stmt::Kind::For: lower_for(s); return;
      case Stmt::Kind::FunctionDef: lower_nested_def(s); return;
      case Stmt::Kind::Assign:
      case Stmt::Kind::AugAssign:
      case Stmt::Kind::ExprStmt:
        append_statement(s.line);
        for (const auto &t : s.targets) lower_value(t.get());
        lower_value(s.value.get());
        return;
      case Stmt::Kind::Pass:
      case Stmt::Kind::Import:
      case Stmt::Kind::ImportFrom:
        append_statement(s.line);
        return;
    }
  }

  void lower_if(const Stmt &s) {
    append_statement(s.line);
    int then_block = new_block("if-then", s.body.empty() ? s.line : s.body.front()->line);
    int else_block = -1;
    int join = -1;
    if (!s.orelse.empty()) {
      else_block = new_block(s.orelse.front()->is_elif ? "elif-test" : "if-else",
                             s.orelse.front()->line);
    } else {
      join = new_block("if-join", s.line);
    }
    lower_condition(*s.value, then_block, else_block >= 0 ? else_block : join);

    std::vector<int> fallthrough;
    current_ = then_block;
    lower_block(s.body);
    if (current_ >= 0) fallthrough.push_back(current_);
    if (else_block >= 0) {
      current_ = else_block;
      lower_block(s.orelse);
      if (current_ >= 0) fallthrough.push_back(current_);
    }
    if (join < 0 && !fallthrough.empty()) join = new_block("if-join", s.line);
    for (int b : fallthrough) edge(b, join);
    current_ = (join >= 0 && (else_block < 0 || !fallthrough.empty())) ? join : -1;
  }

  void lower_while(const Stmt &s) {
    int head = new_block("while-test", s.line);
    edge(ensure_current(s.line), head);
    int body = new_block("while-body", s.body.empty() ? s.line : s.body.front()->line);
    int after = new_block("while-exit", s.line);
    current_ = head;
    lower_condition(*s.value, body, after);
    loops_.push_back({head, after});
    current_ = body;
    lower_block(s.body);
    if (current_ >= 0) edge(current_, head);
    loops_.pop_back();
    current_ = after;
  }

  void lower_for(const Stmt &s) {
    append_statement(s.line);
    lower_value(s.value.get());
    int head = new_block("for-head", s.line);
    edge(ensure_current(s.line), head);
    int body = new_block("for-body", s.body.empty() ? s.line : s.body.front()->line);
    int after = new_block("for-exit", s.line);
    edge(head, body);
    edge(head, after);
    loops_.push_back({head, after});
    current_ = body;
    lower_block(s.body);
    if (current_ >= 0) edge(current_, head);
    loops_.pop_back();
    current_ = after;
  }

  void lower_nested_def(const Stmt &s) {
    append_statement(s.line);
    for (const auto &p : s.params) lower_value(p.default_value.get());
    int inner_entry = new_block("def-entry:" + s.name, s.line);
    int inner_exit = new_block("def-exit:" + s.name, s.line);
    edge(ensure_current(s.line), inner_entry);
    auto saved_loops = std::move(loops_);
    loops_.clear();
    exits_.push_back(inner_exit);
    current_ = inner_entry;
    lower_block(s.body);
    if (current_ >= 0) edge(current_, inner_exit);
    exits_.pop_back();
    loops_ = std::move(saved_loops);
    current_ = inner_exit;
  }

  ControlFlowGraph cfg_;
  int current_ = -1;
  std::vector<Loop> loops_;
  std::vector<int> exits_;
};

}  // namespace

ControlFlowGraph build_cfg(const py::Stmt &function_def) {
  if (function_def.kind != Stmt::Kind::FunctionDef) {
    throw std::invalid_argument("build_cfg expects a function definition");
  }
  return CfgBuilder{}.build(function_def);
}

int cyclomatic_complexity(const ControlFlowGraph &cfg) {
  return static_cast<int>(cfg.edges.size()) - static_cast<int>(cfg.nodes.size()) +
         2 * cfg.components;
}

int analyze_complexity(std::string_view source, std::string_view entry_point) {
  auto parsed = py::parse_function(source, entry_point);
  return cyclomatic_complexity(build_cfg(*parsed.def));
}

std::vector<int> parse_cut_points(std::string_view csv) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    auto comma = csv.find(',', pos);
    auto piece = csv.substr(pos, comma == std::string_view::npos ? csv.size() - pos : comma - pos);
    while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
    while (!piece.empty() && piece.back() == ' ') piece.remove_suffix(1);
    int v = 0;
    auto r = std::from_chars(piece.data(), piece.data() + piece.size(), v);
    if (piece.empty() || r.ec != std::errc() || r.ptr != piece.data() + piece.size()) {
      throw std::invalid_argument("invalid cut point '" + std::string(piece) + "'");
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 1) throw std::invalid_argument("cut points must be positive");
    if (i > 0 && out[i] <= out[i - 1]) {
      throw std::invalid_argument("cut points must be strictly increasing");
    }
  }
  if (out.empty()) throw std::invalid_argument("at least one cut point is required");
  return out;
}

UnitThresholds::UnitThresholds() : alphas_{1, 2, 4, 7} {}

UnitThresholds::UnitThresholds(std::vector<int> alphas) : alphas_(std::move(alphas)) {
  if (alphas_.empty()) throw std::invalid_argument("unit thresholds need at least one cut point");
  if (alphas_.front() != 1) throw std::invalid_argument("alpha_0 must be 1 so units cover nu >= 1");
  for (std::size_t i = 1; i < alphas_.size(); ++i) {
    if (alphas_[i] <= alphas_[i - 1]) {
      throw std::invalid_argument("unit thresholds must be strictly increasing");
    }
  }
}

UnitThresholds UnitThresholds::parse(std::string_view csv) {
  return UnitThresholds(parse_cut_points(csv));
}

std::string UnitThresholds::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < alphas_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(alphas_[i]);
  }
  return s;
}

UnitId classify_unit(int nu, const UnitThresholds &thresholds) {
  const auto &a = thresholds.alphas();
  for (std::size_t j = 1; j < a.size(); ++j) {
    if (nu <= a[j]) return UnitId{static_cast<int>(j)};
  }
  return UnitId{thresholds.n_units()};
}

}  // namespace callforge
