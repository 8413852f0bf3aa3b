#include <algorithm>
#include <array>
#include <cctype>

#include "callforge/pylang.hpp"

namespace callforge::py {

std::string Diagnostic::to_string() const {
  std::string kind_name;
  switch (kind) {
    case Kind::SyntaxError: kind_name = "SyntaxError"; break;
    case Kind::IndentationError: kind_name = "IndentationError"; break;
    case Kind::Unsupported: kind_name = "unsupported construct"; break;
  }
  std::string out = kind_name + " at line " + std::to_string(line) + ", column " +
                    std::to_string(column) + ": " + message;
  if (!construct.empty() && message.find(construct) == std::string::npos) {
    out += " (" + construct + ")";
  }
  return out;
}

bool is_keyword(std::string_view word) {
  static constexpr std::array<std::string_view, 35> kws = {
      "False", "None",   "True",    "and",      "as",     "assert", "async",
      "await", "break",  "class",   "continue", "def",    "del",    "elif",
      "else",  "except", "finally", "for",      "from",   "global", "if",
      "import", "in",    "is",      "lambda",   "nonlocal", "not",  "or",
      "pass",  "raise",  "return",  "try",      "while",  "with",   "yield"};
  return std::find(kws.begin(), kws.end(), word) != kws.end();
}

namespace {

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    indents_.push_back(0);
    while (pos_ < src_.size()) {
      if (at_line_start_ && depth_ == 0) {
        if (handle_indentation()) continue;
      }
      char c = src_[pos_];
      if (c == '\n') {
        newline();
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
        advance();
        continue;
      }
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        continue;
      }
      if (c == '\\') {
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
          advance();
          advance();
          continue;
        }
        if (pos_ + 2 < src_.size() && src_[pos_ + 1] == '\r' && src_[pos_ + 2] == '\n') {
          advance();
          advance();
          advance();
          continue;
        }
        fail("unexpected character after line continuation character");
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' ||
          static_cast<unsigned char>(c) >= 0x80) {
        lex_name_or_prefixed_string();
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && pos_ + 1 < src_.size() &&
           std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        lex_number();
        continue;
      }
      if (c == '\'' || c == '"') {
        lex_string(pos_, false);
        continue;
      }
      lex_operator();
    }
    if (!tokens_.empty() && tokens_.back().kind != Tok::Newline &&
        tokens_.back().kind != Tok::Dedent && tokens_.back().kind != Tok::Indent) {
      push(Tok::Newline, "", pos_, pos_);
    }
    while (indents_.size() > 1) {
      indents_.pop_back();
      push(Tok::Dedent, "", pos_, pos_);
    }
    push(Tok::End, "", pos_, pos_);
    return std::move(tokens_);
  }

 private:
  [[noreturn]] void fail(const std::string &msg, Diagnostic::Kind kind = Diagnostic::Kind::SyntaxError) {
    throw ParseError(Diagnostic{kind, line_, col_, msg, {}});
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void push(Tok kind, std::string text, std::size_t begin, std::size_t end) {
    Token t;
    t.kind = kind;
    t.text = std::move(text);
    t.begin = begin;
    t.end = end;
    t.line = tok_line_;
    t.column = tok_col_;
    tokens_.push_back(std::move(t));
  }

  void mark() {
    tok_line_ = line_;
    tok_col_ = col_;
  }

  void newline() {
    mark();
    if (depth_ == 0 && !tokens_.empty() && tokens_.back().kind != Tok::Newline &&
        tokens_.back().kind != Tok::Indent && tokens_.back().kind != Tok::Dedent) {
      push(Tok::Newline, "", pos_, pos_ + 1);
    }
    advance();
    if (depth_ == 0) at_line_start_ = true;
  }

  // Returns true if the whole line was blank or a comment and was consumed.
  bool handle_indentation() {
    std::size_t p = pos_;
    int width = 0;
    while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t' || src_[p] == '\f')) {
      width = src_[p] == '\t' ? (width / 8 + 1) * 8 : width + 1;
      ++p;
    }
    if (p >= src_.size() || src_[p] == '\n' || src_[p] == '#' ||
        (src_[p] == '\r' && p + 1 < src_.size() && src_[p + 1] == '\n')) {
      while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      if (pos_ < src_.size()) advance();
      return true;
    }
    while (pos_ < p) advance();
    at_line_start_ = false;
    mark();
    if (width > indents_.back()) {
      indents_.push_back(width);
      push(Tok::Indent, "", pos_, pos_);
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        push(Tok::Dedent, "", pos_, pos_);
      }
      if (width != indents_.back()) {
        fail("unindent does not match any outer indentation level",
             Diagnostic::Kind::IndentationError);
      }
    }
    return false;
  }

  void lex_name_or_prefixed_string() {
    mark();
    std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                  src_[pos_] == '_' ||
                                  static_cast<unsigned char>(src_[pos_]) >= 0x80)) {
      advance();
    }
    std::string word(src_.substr(start, pos_ - start));
    if (pos_ < src_.size() && (src_[pos_] == '\'' || src_[pos_] == '"') && word.size() <= 2) {
      std::string lower = word;
      std::transform(lower.begin(), lower.end(), lower.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      if (lower == "r") {
        lex_string(start, true);
        return;
      }
      if (lower == "f" || lower == "rf" || lower == "fr") {
        throw ParseError(Diagnostic{Diagnostic::Kind::Unsupported, tok_line_, tok_col_,
                                    "f-strings are not supported", "f-string"});
      }
      if (lower == "b" || lower == "rb" || lower == "br") {
        throw ParseError(Diagnostic{Diagnostic::Kind::Unsupported, tok_line_, tok_col_,
                                    "bytes literals are not supported", "bytes literal"});
      }
      if (lower == "u") {
        lex_string(start, false);
        return;
      }
    }
    push(Tok::Name, std::move(word), start, pos_);
  }

  void lex_number() {
    mark();
    std::size_t start = pos_;
    if (src_[pos_] == '0' && pos_ + 1 < src_.size() &&
        std::string_view("xXoObB").find(src_[pos_ + 1]) != std::string_view::npos) {
      advance();
      advance();
      while (pos_ < src_.size() && (std::isxdigit(static_cast<unsigned char>(src_[pos_])) ||
                                    src_[pos_] == '_')) {
        advance();
      }
    } else {
      while (pos_ < src_.size()) {
        char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
          advance();
        } else if (c == 'e' || c == 'E') {
          advance();
          if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
        } else {
          break;
        }
      }
      if (pos_ < src_.size() && (src_[pos_] == 'j' || src_[pos_] == 'J')) {
        throw ParseError(Diagnostic{Diagnostic::Kind::Unsupported, tok_line_, tok_col_,
                                    "complex literals are not supported", "complex literal"});
      }
    }
    if (pos_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[pos_])) ||
                               src_[pos_] == '_')) {
      fail("invalid decimal literal");
    }
    push(Tok::Number, std::string(src_.substr(start, pos_ - start)), start, pos_);
  }

  void lex_string(std::size_t start, bool raw) {
    if (start == pos_) mark();
    char quote = src_[pos_];
    bool triple = pos_ + 2 < src_.size() && src_[pos_ + 1] == quote && src_[pos_ + 2] == quote;
    advance();
    if (triple) {
      advance();
      advance();
    }
    std::string out;
    while (true) {
      if (pos_ >= src_.size()) fail("unterminated string literal");
      char c = src_[pos_];
      if (!triple && c == '\n') fail("unterminated string literal");
      if (c == quote) {
        if (!triple) {
          advance();
          break;
        }
        if (pos_ + 2 < src_.size() && src_[pos_ + 1] == quote && src_[pos_ + 2] == quote) {
          advance();
          advance();
          advance();
          break;
        }
      }
      if (c == '\\' && pos_ + 1 < src_.size()) {
        char e = src_[pos_ + 1];
        advance();
        advance();
        if (raw) {
          out.push_back('\\');
          out.push_back(e);
          continue;
        }
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case 'r': out.push_back('\r'); break;
          case '0': out.push_back('\0'); break;
          case '\\': out.push_back('\\'); break;
          case '\'': out.push_back('\''); break;
          case '"': out.push_back('"'); break;
          case '\n': break;
          default:
            out.push_back('\\');
            out.push_back(e);
        }
        continue;
      }
      out.push_back(c);
      advance();
    }
    push(Tok::String, std::move(out), start, pos_);
  }

  void lex_operator() {
    mark();
    static constexpr std::array<std::string_view, 47> ops = {
        "**=", "//=", ">>=", "<<=", "...", "->", "**", "//", "==", "!=", "<=", ">=",
        "<<",  ">>",  "+=",  "-=",  "*=",  "/=", "%=", "&=", "|=", "^=", ":=", "@=",
        "+",   "-",   "*",   "/",   "%",   "@",  "&",  "|",  "^",  "~",  "<",  ">",
        "(",   ")",   "[",   "]",   "{",   "}",  ",",  ":",  ".",  ";",  "="};
    for (auto op : ops) {
      if (src_.substr(pos_, op.size()) == op) {
        std::size_t start = pos_;
        for (std::size_t i = 0; i < op.size(); ++i) advance();
        if (op == "(" || op == "[" || op == "{") ++depth_;
        if ((op == ")" || op == "]" || op == "}") && depth_ > 0) --depth_;
        push(Tok::Op, std::string(op), start, pos_);
        return;
      }
    }
    fail(std::string("invalid character '") + src_[pos_] + "'");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  int tok_line_ = 1;
  int tok_col_ = 1;
  int depth_ = 0;
  bool at_line_start_ = true;
  std::vector<int> indents_;
  std::vector<Token> tokens_;
};

}  // namespace

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

}  // namespace callforge::py
