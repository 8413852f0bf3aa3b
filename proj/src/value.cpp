#include "callforge/value.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>

namespace callforge {

const Value *DictObject::find(const Value &key) const {
  for (const auto &[k, v] : items) {
    if (py_equal(k, key)) return &v;
  }
  return nullptr;
}

Value *DictObject::find(const Value &key) {
  for (auto &[k, v] : items) {
    if (py_equal(k, key)) return &v;
  }
  return nullptr;
}

void DictObject::set(Value key, Value value) {
  if (auto *slot = find(key)) {
    *slot = std::move(value);
    return;
  }
  items.emplace_back(std::move(key), std::move(value));
}

bool DictObject::erase(const Value &key) {
  for (auto it = items.begin(); it != items.end(); ++it) {
    if (py_equal(it->first, key)) {
      items.erase(it);
      return true;
    }
  }
  return false;
}

bool SetObject::contains(const Value &v) const {
  for (const auto &item : items) {
    if (py_equal(item, v)) return true;
  }
  return false;
}

void SetObject::add(Value v) {
  if (!contains(v)) items.push_back(std::move(v));
}

Value Value::list(ValueList items) {
  Value v;
  v.data_ = std::make_shared<ListObject>(ListObject{std::move(items)});
  return v;
}

Value Value::tuple(ValueList items) {
  Value v;
  v.data_ = std::shared_ptr<const ValueList>(std::make_shared<ValueList>(std::move(items)));
  return v;
}

Value Value::dict() {
  Value v;
  v.data_ = std::make_shared<DictObject>();
  return v;
}

Value Value::set(ValueList items) {
  Value v;
  auto obj = std::make_shared<SetObject>();
  for (auto &item : items) obj->add(std::move(item));
  v.data_ = std::move(obj);
  return v;
}

Value Value::object(std::shared_ptr<RuntimeObject> obj) {
  Value v;
  v.data_ = std::move(obj);
  return v;
}

Value::Kind Value::kind() const {
  switch (data_.index()) {
    case 0: return Kind::None;
    case 1: return Kind::Bool;
    case 2: return Kind::Int;
    case 3: return Kind::Float;
    case 4: return Kind::Str;
    case 5: return Kind::List;
    case 6: return Kind::Tuple;
    case 7: return Kind::Dict;
    case 8: return Kind::Set;
    default: return Kind::Object;
  }
}

bool Value::is_number() const {
  auto k = kind();
  return k == Kind::Int || k == Kind::Float || k == Kind::Bool;
}

std::int64_t Value::as_int() const {
  if (is_bool()) return as_bool() ? 1 : 0;
  return std::get<std::int64_t>(data_);
}

double Value::as_float() const {
  switch (kind()) {
    case Kind::Bool: return as_bool() ? 1.0 : 0.0;
    case Kind::Int: return static_cast<double>(std::get<std::int64_t>(data_));
    default: return std::get<double>(data_);
  }
}

ValueList &Value::items() {
  if (is_list()) return std::get<std::shared_ptr<ListObject>>(data_)->items;
  return const_cast<ValueList &>(*std::get<std::shared_ptr<const ValueList>>(data_));
}

const ValueList &Value::items() const {
  if (is_list()) return std::get<std::shared_ptr<ListObject>>(data_)->items;
  return *std::get<std::shared_ptr<const ValueList>>(data_);
}

std::string Value::type_name() const {
  switch (kind()) {
    case Kind::None: return "NoneType";
    case Kind::Bool: return "bool";
    case Kind::Int: return "int";
    case Kind::Float: return "float";
    case Kind::Str: return "str";
    case Kind::List: return "list";
    case Kind::Tuple: return "tuple";
    case Kind::Dict: return "dict";
    case Kind::Set: return "set";
    case Kind::Object: return obj()->type_name();
  }
  return "object";
}

std::string float_repr(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d < 0 ? "-inf" : "inf";
  if (d == 0.0) return std::signbit(d) ? "-0.0" : "0.0";

  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, d, std::chars_format::scientific);
  std::string sci(buf, res.ptr);

  std::string out;
  std::size_t pos = 0;
  if (sci[0] == '-') {
    out.push_back('-');
    pos = 1;
  }
  auto epos = sci.find('e');
  std::string digits;
  for (std::size_t i = pos; i < epos; ++i) {
    if (sci[i] != '.') digits.push_back(sci[i]);
  }
  int exp10 = std::atoi(sci.c_str() + epos + 1);

  // repr switches to exponent notation outside [1e-4, 1e16).
  if (exp10 >= -4 && exp10 < 16) {
    if (exp10 < 0) {
      out += "0.";
      out.append(static_cast<std::size_t>(-exp10 - 1), '0');
      out += digits;
    } else {
      auto int_len = static_cast<std::size_t>(exp10 + 1);
      if (digits.size() <= int_len) {
        out += digits;
        out.append(int_len - digits.size(), '0');
        out += ".0";
      } else {
        out += digits.substr(0, int_len);
        out += '.';
        out += digits.substr(int_len);
      }
    }
    return out;
  }
  out.push_back(digits[0]);
  if (digits.size() > 1) {
    out.push_back('.');
    out += digits.substr(1);
  }
  out.push_back('e');
  out.push_back(exp10 < 0 ? '-' : '+');
  int mag = std::abs(exp10);
  if (mag < 10) out.push_back('0');
  out += std::to_string(mag);
  return out;
}

std::string str_repr(std::string_view s) {
  bool has_single = s.find('\'') != std::string_view::npos;
  bool has_double = s.find('"') != std::string_view::npos;
  char quote = (has_single && !has_double) ? '"' : '\'';
  std::string out;
  out.push_back(quote);
  for (unsigned char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c == static_cast<unsigned char>(quote)) {
          out.push_back('\\');
          out.push_back(static_cast<char>(c));
        } else if (c < 0x20 || c == 0x7f) {
          static constexpr char hex[] = "0123456789abcdef";
          out += "\\x";
          out.push_back(hex[c >> 4]);
          out.push_back(hex[c & 0xf]);
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  out.push_back(quote);
  return out;
}

std::string Value::repr() const {
  switch (kind()) {
    case Kind::None: return "None";
    case Kind::Bool: return as_bool() ? "True" : "False";
    case Kind::Int: return std::to_string(std::get<std::int64_t>(data_));
    case Kind::Float: return float_repr(std::get<double>(data_));
    case Kind::Str: return str_repr(as_str());
    case Kind::List: {
      std::string out = "[";
      const auto &xs = items();
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += xs[i].repr();
      }
      return out + "]";
    }
    case Kind::Tuple: {
      const auto &xs = items();
      std::string out = "(";
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += xs[i].repr();
      }
      if (xs.size() == 1) out += ",";
      return out + ")";
    }
    case Kind::Dict: {
      std::string out = "{";
      bool first = true;
      for (const auto &[k, v] : dict_obj().items) {
        if (!first) out += ", ";
        first = false;
        out += k.repr() + ": " + v.repr();
      }
      return out + "}";
    }
    case Kind::Set: {
      const auto &xs = set_obj().items;
      if (xs.empty()) return "set()";
      std::string out = "{";
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += xs[i].repr();
      }
      return out + "}";
    }
    case Kind::Object: return obj()->repr();
  }
  return "?";
}

std::string Value::str() const {
  if (is_str()) return as_str();
  return repr();
}

bool Value::truthy() const {
  switch (kind()) {
    case Kind::None: return false;
    case Kind::Bool: return as_bool();
    case Kind::Int: return std::get<std::int64_t>(data_) != 0;
    case Kind::Float: return std::get<double>(data_) != 0.0;
    case Kind::Str: return !as_str().empty();
    case Kind::List:
    case Kind::Tuple: return !items().empty();
    case Kind::Dict: return !dict_obj().items.empty();
    case Kind::Set: return !set_obj().items.empty();
    case Kind::Object: return true;
  }
  return true;
}

bool Value::identical(const Value &other) const {
  if (kind() != other.kind()) return false;
  switch (kind()) {
    case Kind::None: return true;
    case Kind::List:
      return std::get<std::shared_ptr<ListObject>>(data_) ==
             std::get<std::shared_ptr<ListObject>>(other.data_);
    case Kind::Tuple:
      return std::get<std::shared_ptr<const ValueList>>(data_) ==
             std::get<std::shared_ptr<const ValueList>>(other.data_);
    case Kind::Dict: return &dict_obj() == &other.dict_obj();
    case Kind::Set: return &set_obj() == &other.set_obj();
    case Kind::Object: return obj() == other.obj();
    default: return py_equal(*this, other);
  }
}

namespace {

bool numeric_equal(const Value &a, const Value &b) {
  if (a.is_float() || b.is_float()) return a.as_float() == b.as_float();
  return a.as_int() == b.as_int();
}

template <typename LeafEq>
bool structural_equal(const Value &a, const Value &b, LeafEq leaf) {
  if (a.is_number() && b.is_number()) return leaf(a, b);
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Value::Kind::None: return true;
    case Value::Kind::Str: return a.as_str() == b.as_str();
    case Value::Kind::List:
    case Value::Kind::Tuple: {
      const auto &xs = a.items();
      const auto &ys = b.items();
      if (xs.size() != ys.size()) return false;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!structural_equal(xs[i], ys[i], leaf)) return false;
      }
      return true;
    }
    case Value::Kind::Dict: {
      const auto &xs = a.dict_obj().items;
      const auto &ys = b.dict_obj();
      if (xs.size() != ys.items.size()) return false;
      for (const auto &[k, v] : xs) {
        const auto *other = ys.find(k);
        if (other == nullptr || !structural_equal(v, *other, leaf)) return false;
      }
      return true;
    }
    case Value::Kind::Set: {
      const auto &xs = a.set_obj().items;
      const auto &ys = b.set_obj();
      if (xs.size() != ys.items.size()) return false;
      for (const auto &x : xs) {
        if (!ys.contains(x)) return false;
      }
      return true;
    }
    case Value::Kind::Object: return a.obj() == b.obj();
    default: return false;
  }
}

}  // namespace

bool py_equal(const Value &a, const Value &b) { return structural_equal(a, b, numeric_equal); }

bool approx_equal(const Value &a, const Value &b, double abs_tol) {
  return structural_equal(a, b, [abs_tol](const Value &x, const Value &y) {
    if (x.is_bool() != y.is_bool()) return false;
    if (!x.is_float() && !y.is_float()) return x.as_int() == y.as_int();
    double dx = x.as_float();
    double dy = y.as_float();
    if (std::isnan(dx) || std::isnan(dy)) return std::isnan(dx) && std::isnan(dy);
    if (std::isinf(dx) || std::isinf(dy)) return dx == dy;
    return std::fabs(dx - dy) <= abs_tol;
  });
}

// ---------------------------------------------------------------------------
// Literal parser

namespace {

class LiteralParser {
 public:
  explicit LiteralParser(std::string_view text) : text_(text) {}

  Value parse_all() {
    Value v = parse_value();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string &what) const {
    throw LiteralError("invalid literal at offset " + std::to_string(pos_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\n' ||
                                   text_[pos_] == '\t' || text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool consume(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  bool peek_char(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  Value parse_value() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end");
    char c = text_[pos_];
    if (c == '[') return parse_sequence('[', ']', false);
    if (c == '(') return parse_sequence('(', ')', true);
    if (c == '{') return parse_brace();
    if (c == '\'' || c == '"') return Value(parse_string());
    if (consume("None")) return Value();
    if (consume("True")) return Value(true);
    if (consume("False")) return Value(false);
    if (consume("set()")) return Value::set();
    if (consume("inf")) return Value(std::numeric_limits<double>::infinity());
    if (consume("nan")) return Value(std::numeric_limits<double>::quiet_NaN());
    return parse_number();
  }

  Value parse_sequence(char open, char close, bool tuple) {
    ++pos_;
    (void)open;
    ValueList items;
    bool trailing_comma = false;
    while (!peek_char(close)) {
      items.push_back(parse_value());
      trailing_comma = false;
      if (consume(",")) {
        trailing_comma = true;
        continue;
      }
      if (!peek_char(close)) fail("expected ',' or closing bracket");
    }
    ++pos_;
    if (tuple) {
      if (items.size() == 1 && !trailing_comma) return items.front();
      return Value::tuple(std::move(items));
    }
    return Value::list(std::move(items));
  }

  Value parse_brace() {
    ++pos_;
    if (consume("}")) return Value::dict();
    Value first = parse_value();
    if (consume(":")) {
      Value d = Value::dict();
      d.dict_obj().set(first, parse_value());
      while (consume(",")) {
        if (peek_char('}')) break;
        Value k = parse_value();
        if (!consume(":")) fail("expected ':' in dict");
        d.dict_obj().set(k, parse_value());
      }
      if (!consume("}")) fail("expected '}'");
      return d;
    }
    ValueList items{first};
    while (consume(",")) {
      if (peek_char('}')) break;
      items.push_back(parse_value());
    }
    if (!consume("}")) fail("expected '}'");
    return Value::set(std::move(items));
  }

  std::string parse_string() {
    char quote = text_[pos_++];
    std::string out;
    while (true) {
      if (pos_ >= text_.size()) fail("unterminated string");
      char c = text_[pos_++];
      if (c == quote) break;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (pos_ >= text_.size()) fail("dangling escape");
      char e = text_[pos_++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '0': out.push_back('\0'); break;
        case '\\': out.push_back('\\'); break;
        case '\'': out.push_back('\''); break;
        case '"': out.push_back('"'); break;
        case 'x': {
          if (pos_ + 2 > text_.size()) fail("short \\x escape");
          int v = 0;
          auto r = std::from_chars(text_.data() + pos_, text_.data() + pos_ + 2, v, 16);
          if (r.ptr != text_.data() + pos_ + 2) fail("bad \\x escape");
          out.push_back(static_cast<char>(v));
          pos_ += 2;
          break;
        }
        default: out.push_back('\\'); out.push_back(e);
      }
    }
    return out;
  }

  Value parse_number() {
    std::size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
    if (text_.substr(pos_, 3) == "inf") {
      pos_ += 3;
      return Value(text_[start] == '-' ? -std::numeric_limits<double>::infinity()
                                       : std::numeric_limits<double>::infinity());
    }
    bool is_float = false;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c >= '0' && c <= '9') {
        ++pos_;
      } else if (c == '.' || c == 'e' || c == 'E') {
        is_float = true;
        ++pos_;
        if ((c == 'e' || c == 'E') && pos_ < text_.size() &&
            (text_[pos_] == '-' || text_[pos_] == '+')) {
          ++pos_;
        }
      } else {
        break;
      }
    }
    std::string_view tok = text_.substr(start, pos_ - start);
    if (tok.empty() || tok == "-" || tok == "+") fail("expected a value");
    const char *first = tok.data();
    if (*first == '+') ++first;
    if (is_float) {
      double d = 0;
      auto r = std::from_chars(first, tok.data() + tok.size(), d);
      if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) fail("bad float");
      return Value(d);
    }
    std::int64_t v = 0;
    auto r = std::from_chars(first, tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) fail("bad integer");
    return Value(v);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Value parse_literal(std::string_view text) { return LiteralParser(text).parse_all(); }

Value from_json(const nlohmann::json &j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null: return Value();
    case nlohmann::json::value_t::boolean: return Value(j.get<bool>());
    case nlohmann::json::value_t::number_integer: return Value(j.get<std::int64_t>());
    case nlohmann::json::value_t::number_unsigned: {
      auto u = j.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
        throw LiteralError("integer out of range");
      }
      return Value(static_cast<std::int64_t>(u));
    }
    case nlohmann::json::value_t::number_float: return Value(j.get<double>());
    case nlohmann::json::value_t::string: return Value(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      ValueList items;
      for (const auto &e : j) items.push_back(from_json(e));
      return Value::list(std::move(items));
    }
    case nlohmann::json::value_t::object: {
      Value d = Value::dict();
      for (const auto &[k, v] : j.items()) d.dict_obj().set(Value(k), from_json(v));
      return d;
    }
    default: throw LiteralError("unsupported JSON value");
  }
}

nlohmann::json to_json(const Value &v) {
  switch (v.kind()) {
    case Value::Kind::None: return nullptr;
    case Value::Kind::Bool: return v.as_bool();
    case Value::Kind::Int: return v.as_int();
    case Value::Kind::Float: return v.as_float();
    case Value::Kind::Str: return v.as_str();
    case Value::Kind::List:
    case Value::Kind::Tuple: {
      auto arr = nlohmann::json::array();
      for (const auto &e : v.items()) arr.push_back(to_json(e));
      return arr;
    }
    case Value::Kind::Set: {
      auto arr = nlohmann::json::array();
      for (const auto &e : v.set_obj().items) arr.push_back(to_json(e));
      return arr;
    }
    case Value::Kind::Dict: {
      auto obj = nlohmann::json::object();
      for (const auto &[k, e] : v.dict_obj().items) obj[k.str()] = to_json(e);
      return obj;
    }
    case Value::Kind::Object: return v.repr();
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Type tags

std::string_view to_string(TypeTag t) {
  switch (t) {
    case TypeTag::Int: return "int";
    case TypeTag::Float: return "float";
    case TypeTag::Bool: return "bool";
    case TypeTag::Str: return "str";
    case TypeTag::ListInt: return "list[int]";
    case TypeTag::ListFloat: return "list[float]";
    case TypeTag::ListStr: return "list[str]";
    case TypeTag::ListBool: return "list[bool]";
    case TypeTag::Tuple: return "tuple";
    case TypeTag::Dict: return "dict";
    case TypeTag::None: return "none";
  }
  return "?";
}

std::optional<TypeTag> parse_type_tag(std::string_view s) {
  static constexpr TypeTag all[] = {TypeTag::Int,     TypeTag::Float,     TypeTag::Bool,
                                    TypeTag::Str,     TypeTag::ListInt,   TypeTag::ListFloat,
                                    TypeTag::ListStr, TypeTag::ListBool,  TypeTag::Tuple,
                                    TypeTag::Dict,    TypeTag::None};
  for (auto t : all) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

TypeObservation observe_type(const Value &v) {
  using S = TypeObservation::Status;
  switch (v.kind()) {
    case Value::Kind::None: return {S::Tag, TypeTag::None, {}};
    case Value::Kind::Bool: return {S::Tag, TypeTag::Bool, {}};
    case Value::Kind::Int: return {S::Tag, TypeTag::Int, {}};
    case Value::Kind::Float: return {S::Tag, TypeTag::Float, {}};
    case Value::Kind::Str: return {S::Tag, TypeTag::Str, {}};
    case Value::Kind::Tuple: return {S::Tag, TypeTag::Tuple, {}};
    case Value::Kind::Dict: return {S::Tag, TypeTag::Dict, {}};
    case Value::Kind::List: {
      const auto &xs = v.items();
      if (xs.empty()) return {S::EmptyList, TypeTag::None, {}};
      auto k = xs.front().kind();
      for (const auto &x : xs) {
        if (x.kind() != k) return {S::Unsupported, TypeTag::None, "list[mixed]"};
      }
      switch (k) {
        case Value::Kind::Int: return {S::Tag, TypeTag::ListInt, {}};
        case Value::Kind::Float: return {S::Tag, TypeTag::ListFloat, {}};
        case Value::Kind::Str: return {S::Tag, TypeTag::ListStr, {}};
        case Value::Kind::Bool: return {S::Tag, TypeTag::ListBool, {}};
        default: return {S::Unsupported, TypeTag::None, "list[" + xs.front().type_name() + "]"};
      }
    }
    default: return {S::Unsupported, TypeTag::None, v.type_name()};
  }
}

}  // namespace callforge
