#pragma once

// Lexer, syntax tree and parser for the Python subset that reference
// solutions and graded completions are written in.

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "callforge/value.hpp"

namespace callforge::py {

struct Diagnostic {
  enum class Kind { SyntaxError, IndentationError, Unsupported };
  Kind kind{Kind::SyntaxError};
  int line{0};
  int column{0};
  std::string message;
  std::string construct;  // set for Unsupported

  /// Python exception class a real interpreter would raise for this diagnostic.
  [[nodiscard]] std::string exception_class() const {
    return kind == Kind::IndentationError ? "IndentationError" : "SyntaxError";
  }
  [[nodiscard]] std::string to_string() const;
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(Diagnostic d) : std::runtime_error(d.to_string()), diag_(std::move(d)) {}
  [[nodiscard]] const Diagnostic &diagnostic() const { return diag_; }

 private:
  Diagnostic diag_;
};

enum class Tok { Name, Number, String, Op, Newline, Indent, Dedent, End };

struct Token {
  Tok kind{Tok::End};
  std::string text;  // for String: decoded contents
  int line{0};
  int column{0};
  std::size_t begin{0};  // byte span in the source
  std::size_t end{0};
};

/// Tokenizes with INDENT/DEDENT tracking. Throws ParseError.
std::vector<Token> tokenize(std::string_view source);

// ---------------------------------------------------------------------------
// Syntax tree

enum class BinOpKind { Add, Sub, Mul, Div, FloorDiv, Mod, Pow, BitAnd, BitOr, BitXor, LShift, RShift };
enum class UnaryKind { Neg, Pos, Not, Invert };
enum class CmpKind { Eq, NotEq, Lt, LtE, Gt, GtE, In, NotIn, Is, IsNot };

struct Expr;
struct Stmt;
using ExprPtr = std::unique_ptr<Expr>;
using StmtPtr = std::unique_ptr<Stmt>;
using Block = std::vector<StmtPtr>;

struct Expr {
  enum class Kind {
    Name,
    Constant,
    List,
    Tuple,
    Dict,
    Set,
    BinOp,
    UnaryOp,
    BoolOp,
    Compare,
    Call,
    Attribute,
    Subscript,
    Slice,
  };

  Kind kind{Kind::Constant};
  int line{0};
  int column{0};

  std::string id;   // Name identifier, Attribute name
  Value constant;   // Constant
  std::vector<ExprPtr> elts;    // List/Tuple/Set elements, Dict keys
  std::vector<ExprPtr> values;  // Dict values, BoolOp operands, Compare comparators
  // BinOp: left/right. UnaryOp: left. Compare: left. Call: left is the callee.
  // Attribute: left. Subscript: left[right]. Slice: left:right:step (each nullable).
  ExprPtr left;
  ExprPtr right;
  ExprPtr step;
  BinOpKind binop{BinOpKind::Add};
  UnaryKind unop{UnaryKind::Neg};
  bool is_and{false};  // BoolOp
  std::vector<CmpKind> cmpops;
  std::vector<ExprPtr> args;
  std::vector<std::pair<std::string, ExprPtr>> kwargs;
};

struct Param {
  std::string name;
  ExprPtr default_value;  // nullable
};

struct Stmt {
  enum class Kind {
    FunctionDef,
    Return,
    If,
    While,
    For,
    Break,
    Continue,
    Pass,
    Assign,
    AugAssign,
    ExprStmt,
    Import,
    ImportFrom,
    Raise,
    Assert,
  };

  Kind kind{Kind::Pass};
  int line{0};
  int column{0};

  std::string name;  // FunctionDef name, ImportFrom module
  std::vector<Param> params;
  std::vector<ExprPtr> targets;  // Assign (chained), AugAssign, For target
  ExprPtr value;                 // Return/Assign/AugAssign/ExprStmt/Raise value, If/While/Assert test, For iterable
  ExprPtr message;               // Assert message, nullable
  BinOpKind augop{BinOpKind::Add};
  Block body;
  Block orelse;
  bool is_elif{false};  // If nested as the sole orelse statement of an enclosing If
  std::vector<std::pair<std::string, std::string>> imports;  // (name, bound-as)
};

struct Module {
  std::string source;
  Block body;

  [[nodiscard]] const Stmt *find_function(std::string_view name) const;
};

/// Parses a module of the supported subset. Throws ParseError.
std::shared_ptr<const Module> parse_module(std::string_view source);

struct ParsedFunction {
  std::shared_ptr<const Module> module;
  const Stmt *def{nullptr};
};

/// Parses source holding one function definition (plus optional imports and
/// helpers). With an empty entry point the first top-level def is taken.
ParsedFunction parse_function(std::string_view source, std::string_view entry_point = {});

/// Names bound at module level: defs, imports and simple assignments.
struct TopLevelNames {
  std::vector<std::string> defined;   // defs and assignments
  std::vector<std::string> imported;  // import bindings
};
TopLevelNames top_level_names(const Module &m);

bool is_keyword(std::string_view word);

}  // namespace callforge::py
