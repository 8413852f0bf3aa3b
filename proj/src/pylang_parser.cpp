#include <charconv>
#include <algorithm>
#include <cstdlib>
#include <functional>

#include "callforge/pylang.hpp"

namespace callforge::py {

namespace {

class Parser {
 public:
  explicit Parser(std::string_view source) : tokens_(tokenize(source)) {}

  Block parse_file() {
    Block body;
    skip_newlines();
    while (!at(Tok::End)) {
      if (at(Tok::Indent)) fail_indent("unexpected indent");
      parse_statement(body);
      skip_newlines();
    }
    return body;
  }

 private:
  // -- token helpers --------------------------------------------------------

  [[nodiscard]] const Token &cur() const { return tokens_[pos_]; }
  [[nodiscard]] const Token &peek(std::size_t n = 1) const {
    return tokens_[std::min(pos_ + n, tokens_.size() - 1)];
  }
  [[nodiscard]] bool at(Tok k) const { return cur().kind == k; }
  [[nodiscard]] bool at_op(std::string_view op) const {
    return cur().kind == Tok::Op && cur().text == op;
  }
  [[nodiscard]] bool at_kw(std::string_view kw) const {
    return cur().kind == Tok::Name && cur().text == kw;
  }
  const Token &take() { return tokens_[pos_++]; }

  bool accept_op(std::string_view op) {
    if (at_op(op)) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept_kw(std::string_view kw) {
    if (at_kw(kw)) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect_op(std::string_view op) {
    if (!accept_op(op)) fail("expected '" + std::string(op) + "'");
  }
  void skip_newlines() {
    while (at(Tok::Newline)) ++pos_;
  }

  [[noreturn]] void fail(const std::string &msg) const {
    throw ParseError(Diagnostic{Diagnostic::Kind::SyntaxError, cur().line, cur().column,
                                msg.empty() ? "invalid syntax" : msg, {}});
  }
  [[noreturn]] void fail_indent(const std::string &msg) const {
    throw ParseError(
        Diagnostic{Diagnostic::Kind::IndentationError, cur().line, cur().column, msg, {}});
  }
  [[noreturn]] void unsupported(const std::string &construct) const {
    throw ParseError(Diagnostic{Diagnostic::Kind::Unsupported, cur().line, cur().column,
                                construct + " is outside the supported subset", construct});
  }

  template <typename Node>
  std::unique_ptr<Node> make() const {
    auto n = std::make_unique<Node>();
    n->line = cur().line;
    n->column = cur().column;
    return n;
  }

  // -- statements -----------------------------------------------------------

  void parse_statement(Block &out) {
    if (at(Tok::Name)) {
      const auto &w = cur().text;
      if (w == "def") return out.push_back(parse_def());
      if (w == "if") return out.push_back(parse_if());
      if (w == "while") return out.push_back(parse_while());
      if (w == "for") return out.push_back(parse_for());
      if (w == "class") unsupported("class definition");
      if (w == "try") unsupported("try statement");
      if (w == "with") unsupported("with statement");
      if (w == "async") unsupported("async statement");
      if (w == "match" && looks_like_match()) unsupported("match statement");
      if (w == "else" || w == "elif") fail("invalid syntax");
    }
    if (at_op("@")) unsupported("decorator");
    parse_simple_line(out);
  }

  bool looks_like_match() const {
    // `match <subject>:` at statement start; plain uses of a name called
    // `match` are assignments or calls and never end the line with ':'.
    const Token &next = peek();
    if (next.kind == Tok::Op && (next.text == "=" || next.text == "." || next.text == "(" ||
                                 next.text == "[" || next.text == ",")) {
      if (next.text != "(" && next.text != "[") return false;
    }
    for (std::size_t i = pos_ + 1; i < tokens_.size(); ++i) {
      if (tokens_[i].kind == Tok::Newline || tokens_[i].kind == Tok::End) {
        return i > pos_ + 1 && tokens_[i - 1].kind == Tok::Op && tokens_[i - 1].text == ":";
      }
    }
    return false;
  }

  void parse_simple_line(Block &out) {
    while (true) {
      out.push_back(parse_simple());
      if (accept_op(";")) {
        if (at(Tok::Newline) || at(Tok::End)) break;
        continue;
      }
      break;
    }
    if (at(Tok::End)) return;
    if (!at(Tok::Newline)) fail("invalid syntax");
    ++pos_;
  }

  StmtPtr parse_simple() {
    auto s = make<Stmt>();
    if (at(Tok::Name)) {
      const std::string w = cur().text;
      if (w == "return") {
        ++pos_;
        s->kind = Stmt::Kind::Return;
        if (!at_simple_end()) s->value = parse_testlist();
        return s;
      }
      if (w == "pass") {
        ++pos_;
        s->kind = Stmt::Kind::Pass;
        return s;
      }
      if (w == "break") {
        if (loop_depth_ == 0) fail("'break' outside loop");
        ++pos_;
        s->kind = Stmt::Kind::Break;
        return s;
      }
      if (w == "continue") {
        if (loop_depth_ == 0) fail("'continue' not properly in loop");
        ++pos_;
        s->kind = Stmt::Kind::Continue;
        return s;
      }
      if (w == "raise") {
        ++pos_;
        s->kind = Stmt::Kind::Raise;
        if (!at_simple_end()) s->value = parse_test();
        if (at_kw("from")) unsupported("raise-from");
        return s;
      }
      if (w == "import") return parse_import();
      if (w == "from") return parse_from_import();
      if (w == "assert") {
        ++pos_;
        s->kind = Stmt::Kind::Assert;
        s->value = parse_test();
        if (at_op(",")) {
          ++pos_;
          s->message = parse_test();
        }
        return s;
      }
      if (w == "global") unsupported("global statement");
      if (w == "nonlocal") unsupported("nonlocal statement");
      if (w == "del") unsupported("del statement");
      if (w == "yield") unsupported("yield expression");
      if (w == "lambda") unsupported("lambda expression");
      if (is_keyword(w) && w != "True" && w != "False" && w != "None" && w != "not" &&
          w != "await") {
        fail("invalid syntax");
      }
    }

    ExprPtr first = parse_testlist_star();
    if (at_op(":")) unsupported("annotated assignment");
    static constexpr std::pair<std::string_view, BinOpKind> augs[] = {
        {"+=", BinOpKind::Add},     {"-=", BinOpKind::Sub},     {"*=", BinOpKind::Mul},
        {"/=", BinOpKind::Div},     {"//=", BinOpKind::FloorDiv}, {"%=", BinOpKind::Mod},
        {"**=", BinOpKind::Pow},    {"&=", BinOpKind::BitAnd},  {"|=", BinOpKind::BitOr},
        {"^=", BinOpKind::BitXor},  {"<<=", BinOpKind::LShift}, {">>=", BinOpKind::RShift}};
    for (const auto &[op, kind] : augs) {
      if (accept_op(op)) {
        check_target(*first, false);
        s->kind = Stmt::Kind::AugAssign;
        s->augop = kind;
        s->targets.push_back(std::move(first));
        s->value = parse_testlist();
        return s;
      }
    }
    if (at_op("=")) {
      s->kind = Stmt::Kind::Assign;
      std::vector<ExprPtr> chain;
      chain.push_back(std::move(first));
      while (accept_op("=")) chain.push_back(parse_testlist_star());
      s->value = std::move(chain.back());
      chain.pop_back();
      for (auto &t : chain) {
        check_target(*t, true);
        s->targets.push_back(std::move(t));
      }
      return s;
    }
    if (at_op(":=")) unsupported("assignment expression");
    s->kind = Stmt::Kind::ExprStmt;
    s->value = std::move(first);
    return s;
  }

  [[nodiscard]] bool at_simple_end() const {
    return at(Tok::Newline) || at(Tok::End) || at_op(";");
  }

  void check_target(const Expr &e, bool allow_tuple) const {
    switch (e.kind) {
      case Expr::Kind::Name:
      case Expr::Kind::Subscript:
      case Expr::Kind::Attribute: return;
      case Expr::Kind::Tuple:
      case Expr::Kind::List:
        if (allow_tuple) {
          for (const auto &elt : e.elts) check_target(*elt, true);
          return;
        }
        break;
      default: break;
    }
    throw ParseError(Diagnostic{Diagnostic::Kind::SyntaxError, e.line, e.column,
                                "cannot assign to expression", {}});
  }

  std::string parse_dotted_name() {
    if (!at(Tok::Name)) fail("expected module name");
    std::string name = take().text;
    while (accept_op(".")) {
      if (!at(Tok::Name)) fail("expected module name");
      name += "." + take().text;
    }
    return name;
  }

  StmtPtr parse_import() {
    auto s = make<Stmt>();
    ++pos_;
    s->kind = Stmt::Kind::Import;
    do {
      std::string mod = parse_dotted_name();
      std::string as = mod.substr(0, mod.find('.'));
      if (accept_kw("as")) {
        if (!at(Tok::Name)) fail("expected name after 'as'");
        as = take().text;
      }
      s->imports.emplace_back(mod, as);
    } while (accept_op(","));
    return s;
  }

  StmtPtr parse_from_import() {
    auto s = make<Stmt>();
    ++pos_;
    s->kind = Stmt::Kind::ImportFrom;
    if (at_op(".")) unsupported("relative import");
    s->name = parse_dotted_name();
    if (!accept_kw("import")) fail("expected 'import'");
    if (accept_op("*")) unsupported("star import");
    bool paren = accept_op("(");
    do {
      if (paren && at_op(")")) break;
      if (!at(Tok::Name)) fail("expected name to import");
      std::string n = take().text;
      std::string as = n;
      if (accept_kw("as")) {
        if (!at(Tok::Name)) fail("expected name after 'as'");
        as = take().text;
      }
      s->imports.emplace_back(n, as);
    } while (accept_op(","));
    if (paren) expect_op(")");
    return s;
  }

  Block parse_suite() {
    expect_op(":");
    Block body;
    if (!at(Tok::Newline)) {
      parse_simple_line(body);
      return body;
    }
    ++pos_;
    skip_newlines();
    if (!at(Tok::Indent)) fail_indent("expected an indented block");
    ++pos_;
    while (!at(Tok::Dedent) && !at(Tok::End)) {
      if (at(Tok::Indent)) fail_indent("unexpected indent");
      parse_statement(body);
      skip_newlines();
    }
    if (at(Tok::Dedent)) ++pos_;
    return body;
  }

  StmtPtr parse_def() {
    auto s = make<Stmt>();
    ++pos_;
    s->kind = Stmt::Kind::FunctionDef;
    if (!at(Tok::Name) || is_keyword(cur().text)) fail("expected function name");
    s->name = take().text;
    expect_op("(");
    bool seen_default = false;
    while (!at_op(")")) {
      if (at_op("*") || at_op("**")) unsupported("variadic parameters");
      if (at_op("/")) unsupported("positional-only marker");
      if (!at(Tok::Name) || is_keyword(cur().text)) fail("expected parameter name");
      Param p;
      p.name = take().text;
      if (accept_op(":")) (void)parse_test();  // annotation, discarded
      if (accept_op("=")) {
        p.default_value = parse_test();
        seen_default = true;
      } else if (seen_default) {
        fail("non-default argument follows default argument");
      }
      for (const auto &other : s->params) {
        if (other.name == p.name) fail("duplicate argument '" + p.name + "' in function definition");
      }
      s->params.push_back(std::move(p));
      if (!accept_op(",")) break;
    }
    expect_op(")");
    if (accept_op("->")) (void)parse_test();
    int saved_depth = loop_depth_;
    loop_depth_ = 0;
    s->body = parse_suite();
    loop_depth_ = saved_depth;
    return s;
  }

  StmtPtr parse_if() {
    auto s = make<Stmt>();
    ++pos_;
    s->kind = Stmt::Kind::If;
    s->value = parse_named_test();
    s->body = parse_suite();
    skip_newlines_before_clause();
    if (at_kw("elif")) {
      auto elif = parse_if();
      elif->is_elif = true;
      s->orelse.push_back(std::move(elif));
    } else if (at_kw("else")) {
      ++pos_;
      s->orelse = parse_suite();
    }
    return s;
  }

  // After a suite, a following clause keyword sits on a new logical line.
  void skip_newlines_before_clause() {
    std::size_t p = pos_;
    while (tokens_[p].kind == Tok::Newline) ++p;
    const auto &t = tokens_[p];
    if (t.kind == Tok::Name && (t.text == "elif" || t.text == "else")) pos_ = p;
  }

  StmtPtr parse_while() {
    auto s = make<Stmt>();
    ++pos_;
    s->kind = Stmt::Kind::While;
    s->value = parse_named_test();
    ++loop_depth_;
    s->body = parse_suite();
    --loop_depth_;
    skip_newlines_before_clause();
    if (at_kw("else")) unsupported("while-else clause");
    return s;
  }

  StmtPtr parse_for() {
    auto s = make<Stmt>();
    ++pos_;
    s->kind = Stmt::Kind::For;
    if (at_kw("async")) unsupported("async for");
    auto target = parse_target_list();
    check_target(*target, true);
    s->targets.push_back(std::move(target));
    if (!accept_kw("in")) fail("expected 'in'");
    s->value = parse_testlist();
    ++loop_depth_;
    s->body = parse_suite();
    --loop_depth_;
    skip_newlines_before_clause();
    if (at_kw("else")) unsupported("for-else clause");
    return s;
  }

  ExprPtr parse_target_list() {
    auto first = parse_bitor();
    if (!at_op(",")) return first;
    auto tup = make<Expr>();
    tup->kind = Expr::Kind::Tuple;
    tup->line = first->line;
    tup->column = first->column;
    tup->elts.push_back(std::move(first));
    while (accept_op(",")) {
      if (at_kw("in")) break;
      tup->elts.push_back(parse_bitor());
    }
    return tup;
  }

  // -- expressions ----------------------------------------------------------

  ExprPtr parse_named_test() {
    auto e = parse_test();
    if (at_op(":=")) unsupported("assignment expression");
    return e;
  }

  ExprPtr parse_testlist_star() {
    if (at_op("*")) unsupported("starred expression");
    return parse_testlist();
  }

  ExprPtr parse_testlist() {
    auto first = parse_test();
    if (!at_op(",")) return first;
    auto tup = make<Expr>();
    tup->kind = Expr::Kind::Tuple;
    tup->line = first->line;
    tup->column = first->column;
    tup->elts.push_back(std::move(first));
    while (accept_op(",")) {
      if (at_simple_end() || at_op("=") || at_op(")") || at_op(":")) break;
      if (at_op("*")) unsupported("starred expression");
      tup->elts.push_back(parse_test());
    }
    return tup;
  }

  ExprPtr parse_test() {
    if (at_kw("lambda")) unsupported("lambda expression");
    if (at_kw("yield")) unsupported("yield expression");
    auto e = parse_or();
    if (at_kw("if")) unsupported("conditional expression");
    return e;
  }

  ExprPtr parse_or() {
    auto first = parse_and();
    if (!at_kw("or")) return first;
    auto e = make<Expr>();
    e->kind = Expr::Kind::BoolOp;
    e->is_and = false;
    e->line = first->line;
    e->column = first->column;
    e->values.push_back(std::move(first));
    while (accept_kw("or")) e->values.push_back(parse_and());
    return e;
  }

  ExprPtr parse_and() {
    auto first = parse_not();
    if (!at_kw("and")) return first;
    auto e = make<Expr>();
    e->kind = Expr::Kind::BoolOp;
    e->is_and = true;
    e->line = first->line;
    e->column = first->column;
    e->values.push_back(std::move(first));
    while (accept_kw("and")) e->values.push_back(parse_not());
    return e;
  }

  ExprPtr parse_not() {
    if (at_kw("not")) {
      auto e = make<Expr>();
      ++pos_;
      e->kind = Expr::Kind::UnaryOp;
      e->unop = UnaryKind::Not;
      e->left = parse_not();
      return e;
    }
    return parse_comparison();
  }

  bool take_cmp(CmpKind &out) {
    if (cur().kind == Tok::Op) {
      const auto &t = cur().text;
      if (t == "==") out = CmpKind::Eq;
      else if (t == "!=") out = CmpKind::NotEq;
      else if (t == "<") out = CmpKind::Lt;
      else if (t == "<=") out = CmpKind::LtE;
      else if (t == ">") out = CmpKind::Gt;
      else if (t == ">=") out = CmpKind::GtE;
      else return false;
      ++pos_;
      return true;
    }
    if (at_kw("in")) {
      ++pos_;
      out = CmpKind::In;
      return true;
    }
    if (at_kw("not") && peek().kind == Tok::Name && peek().text == "in") {
      pos_ += 2;
      out = CmpKind::NotIn;
      return true;
    }
    if (at_kw("is")) {
      ++pos_;
      out = accept_kw("not") ? CmpKind::IsNot : CmpKind::Is;
      return true;
    }
    return false;
  }

  ExprPtr parse_comparison() {
    auto first = parse_bitor();
    CmpKind op{};
    if (!take_cmp(op)) return first;
    auto e = make<Expr>();
    e->kind = Expr::Kind::Compare;
    e->line = first->line;
    e->column = first->column;
    e->left = std::move(first);
    e->cmpops.push_back(op);
    e->values.push_back(parse_bitor());
    while (take_cmp(op)) {
      e->cmpops.push_back(op);
      e->values.push_back(parse_bitor());
    }
    return e;
  }

  ExprPtr binary(ExprPtr l, BinOpKind k, ExprPtr r) {
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::BinOp;
    e->line = l->line;
    e->column = l->column;
    e->binop = k;
    e->left = std::move(l);
    e->right = std::move(r);
    return e;
  }

  ExprPtr parse_bitor() {
    auto e = parse_bitxor();
    while (at_op("|")) {
      ++pos_;
      e = binary(std::move(e), BinOpKind::BitOr, parse_bitxor());
    }
    return e;
  }

  ExprPtr parse_bitxor() {
    auto e = parse_bitand();
    while (at_op("^")) {
      ++pos_;
      e = binary(std::move(e), BinOpKind::BitXor, parse_bitand());
    }
    return e;
  }

  ExprPtr parse_bitand() {
    auto e = parse_shift();
    while (at_op("&")) {
      ++pos_;
      e = binary(std::move(e), BinOpKind::BitAnd, parse_shift());
    }
    return e;
  }

  ExprPtr parse_shift() {
    auto e = parse_arith();
    while (at_op("<<") || at_op(">>")) {
      auto k = take().text == "<<" ? BinOpKind::LShift : BinOpKind::RShift;
      e = binary(std::move(e), k, parse_arith());
    }
    return e;
  }

  ExprPtr parse_arith() {
    auto e = parse_term();
    while (at_op("+") || at_op("-")) {
      auto k = take().text == "+" ? BinOpKind::Add : BinOpKind::Sub;
      e = binary(std::move(e), k, parse_term());
    }
    return e;
  }

  ExprPtr parse_term() {
    auto e = parse_factor();
    while (true) {
      BinOpKind k{};
      if (at_op("*")) k = BinOpKind::Mul;
      else if (at_op("/")) k = BinOpKind::Div;
      else if (at_op("//")) k = BinOpKind::FloorDiv;
      else if (at_op("%")) k = BinOpKind::Mod;
      else if (at_op("@")) unsupported("matrix multiplication operator");
      else break;
      ++pos_;
      e = binary(std::move(e), k, parse_factor());
    }
    return e;
  }

  ExprPtr parse_factor() {
    if (at_op("-") || at_op("+") || at_op("~")) {
      auto e = make<Expr>();
      auto t = take().text;
      e->kind = Expr::Kind::UnaryOp;
      e->unop = t == "-" ? UnaryKind::Neg : t == "+" ? UnaryKind::Pos : UnaryKind::Invert;
      e->left = parse_factor();
      return e;
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    if (at_kw("await")) unsupported("await expression");
    auto base = parse_primary();
    if (at_op("**")) {
      ++pos_;
      return binary(std::move(base), BinOpKind::Pow, parse_factor());
    }
    return base;
  }

  ExprPtr parse_primary() {
    auto e = parse_atom();
    while (true) {
      if (at_op("(")) {
        auto call = make<Expr>();
        ++pos_;
        call->kind = Expr::Kind::Call;
        call->line = e->line;
        call->column = e->column;
        call->left = std::move(e);
        parse_call_args(*call);
        e = std::move(call);
      } else if (at_op("[")) {
        auto sub = make<Expr>();
        ++pos_;
        sub->kind = Expr::Kind::Subscript;
        sub->line = e->line;
        sub->column = e->column;
        sub->left = std::move(e);
        sub->right = parse_subscript();
        expect_op("]");
        e = std::move(sub);
      } else if (at_op(".")) {
        ++pos_;
        if (!at(Tok::Name)) fail("expected attribute name");
        auto attr = make<Expr>();
        attr->kind = Expr::Kind::Attribute;
        attr->line = e->line;
        attr->column = e->column;
        attr->id = take().text;
        attr->left = std::move(e);
        e = std::move(attr);
      } else {
        return e;
      }
    }
  }

  void parse_call_args(Expr &call) {
    while (!at_op(")")) {
      if (at_op("*") || at_op("**")) unsupported("argument unpacking");
      if (at(Tok::Name) && peek().kind == Tok::Op && peek().text == "=") {
        std::string name = take().text;
        ++pos_;
        call.kwargs.emplace_back(std::move(name), parse_test());
      } else {
        if (!call.kwargs.empty()) fail("positional argument follows keyword argument");
        call.args.push_back(parse_test());
        if (at_kw("for")) unsupported("generator expression");
      }
      if (!accept_op(",")) break;
    }
    expect_op(")");
  }

  ExprPtr parse_subscript() {
    auto slice_part = [&]() -> ExprPtr {
      if (at_op(":") || at_op("]") || at_op(",")) return nullptr;
      return parse_test();
    };
    auto lower = slice_part();
    if (!at_op(":")) {
      if (!lower) fail("invalid syntax");
      if (at_op(",")) {
        auto tup = make<Expr>();
        tup->kind = Expr::Kind::Tuple;
        tup->elts.push_back(std::move(lower));
        while (accept_op(",")) {
          if (at_op("]")) break;
          tup->elts.push_back(parse_test());
        }
        return tup;
      }
      return lower;
    }
    auto s = make<Expr>();
    s->kind = Expr::Kind::Slice;
    ++pos_;
    s->left = std::move(lower);
    s->right = slice_part();
    if (accept_op(":")) s->step = slice_part();
    return s;
  }

  ExprPtr parse_atom() {
    const Token &t = cur();
    auto e = make<Expr>();
    switch (t.kind) {
      case Tok::Name: {
        if (t.text == "True" || t.text == "False" || t.text == "None") {
          e->kind = Expr::Kind::Constant;
          e->constant = t.text == "None" ? Value() : Value(t.text == "True");
          ++pos_;
          return e;
        }
        if (t.text == "lambda") unsupported("lambda expression");
        if (t.text == "yield") unsupported("yield expression");
        if (is_keyword(t.text)) fail("invalid syntax");
        e->kind = Expr::Kind::Name;
        e->id = t.text;
        ++pos_;
        return e;
      }
      case Tok::Number: {
        e->kind = Expr::Kind::Constant;
        e->constant = parse_number_token(t);
        ++pos_;
        return e;
      }
      case Tok::String: {
        e->kind = Expr::Kind::Constant;
        std::string s;
        while (at(Tok::String)) s += take().text;
        e->constant = Value(std::move(s));
        return e;
      }
      case Tok::Op: break;
      case Tok::Indent: fail_indent("unexpected indent");
      default: fail("invalid syntax");
    }
    if (accept_op("(")) {
      if (accept_op(")")) {
        e->kind = Expr::Kind::Tuple;
        return e;
      }
      auto first = parse_test();
      if (at_kw("for")) unsupported("generator expression");
      if (accept_op(")")) return first;
      e->kind = Expr::Kind::Tuple;
      e->elts.push_back(std::move(first));
      while (accept_op(",")) {
        if (at_op(")")) break;
        e->elts.push_back(parse_test());
      }
      expect_op(")");
      return e;
    }
    if (accept_op("[")) {
      e->kind = Expr::Kind::List;
      while (!at_op("]")) {
        if (at_op("*")) unsupported("starred expression");
        e->elts.push_back(parse_test());
        if (at_kw("for")) unsupported("list comprehension");
        if (!accept_op(",")) break;
      }
      expect_op("]");
      return e;
    }
    if (accept_op("{")) {
      if (accept_op("}")) {
        e->kind = Expr::Kind::Dict;
        return e;
      }
      if (at_op("**")) unsupported("dict unpacking");
      auto first = parse_test();
      if (accept_op(":")) {
        e->kind = Expr::Kind::Dict;
        e->elts.push_back(std::move(first));
        e->values.push_back(parse_test());
        if (at_kw("for")) unsupported("dict comprehension");
        while (accept_op(",")) {
          if (at_op("}")) break;
          e->elts.push_back(parse_test());
          expect_op(":");
          e->values.push_back(parse_test());
        }
      } else {
        if (at_kw("for")) unsupported("set comprehension");
        e->kind = Expr::Kind::Set;
        e->elts.push_back(std::move(first));
        while (accept_op(",")) {
          if (at_op("}")) break;
          e->elts.push_back(parse_test());
        }
      }
      expect_op("}");
      return e;
    }
    if (at_op("...")) unsupported("ellipsis literal");
    fail("invalid syntax");
  }

  Value parse_number_token(const Token &t) const {
    std::string s;
    for (char c : t.text) {
      if (c != '_') s.push_back(c);
    }
    if (s.size() > 2 && s[0] == '0' && std::string_view("xXoObB").find(s[1]) != std::string_view::npos) {
      int base = (s[1] == 'x' || s[1] == 'X') ? 16 : (s[1] == 'o' || s[1] == 'O') ? 8 : 2;
      std::int64_t v = 0;
      auto r = std::from_chars(s.data() + 2, s.data() + s.size(), v, base);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("invalid integer literal");
      return Value(v);
    }
    bool is_float = s.find_first_of(".eE") != std::string::npos;
    if (is_float) {
      double d = 0;
      auto r = std::from_chars(s.data(), s.data() + s.size(), d);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("invalid float literal");
      return Value(d);
    }
    if (s.size() > 1 && s[0] == '0' && s.find_first_not_of('0') != std::string::npos) {
      fail("leading zeros in decimal integer literals are not permitted");
    }
    std::int64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec == std::errc::result_out_of_range) unsupported("integer literal beyond 64 bits");
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("invalid integer literal");
    return Value(v);
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int loop_depth_ = 0;
};

}  // namespace

const Stmt *Module::find_function(std::string_view name) const {
  for (const auto &s : body) {
    if (s->kind == Stmt::Kind::FunctionDef && s->name == name) return s.get();
  }
  return nullptr;
}

std::shared_ptr<const Module> parse_module(std::string_view source) {
  auto m = std::make_shared<Module>();
  m->source = std::string(source);
  Parser p(m->source);
  m->body = p.parse_file();
  return m;
}

ParsedFunction parse_function(std::string_view source, std::string_view entry_point) {
  ParsedFunction out;
  out.module = parse_module(source);
  if (entry_point.empty()) {
    for (const auto &s : out.module->body) {
      if (s->kind == Stmt::Kind::FunctionDef) {
        out.def = s.get();
        break;
      }
    }
  } else {
    out.def = out.module->find_function(entry_point);
  }
  if (out.def == nullptr) {
    std::string what = entry_point.empty() ? std::string("no function definition found")
                                           : "function '" + std::string(entry_point) + "' is not defined";
    throw ParseError(Diagnostic{Diagnostic::Kind::SyntaxError, 1, 1, what, {}});
  }
  return out;
}

TopLevelNames top_level_names(const Module &m) {
  TopLevelNames names;
  auto add_unique = [](std::vector<std::string> &v, const std::string &n) {
    if (std::find(v.begin(), v.end(), n) == v.end()) v.push_back(n);
  };
  std::function<void(const Expr &)> add_target = [&](const Expr &t) {
    if (t.kind == Expr::Kind::Name) add_unique(names.defined, t.id);
    if (t.kind == Expr::Kind::Tuple || t.kind == Expr::Kind::List) {
      for (const auto &e : t.elts) add_target(*e);
    }
  };
  for (const auto &s : m.body) {
    switch (s->kind) {
      case Stmt::Kind::FunctionDef: add_unique(names.defined, s->name); break;
      case Stmt::Kind::Import:
      case Stmt::Kind::ImportFrom:
        for (const auto &[n, as] : s->imports) add_unique(names.imported, as);
        break;
      case Stmt::Kind::Assign:
        for (const auto &t : s->targets) add_target(*t);
        break;
      default: break;
    }
  }
  return names;
}

}  // namespace callforge::py
