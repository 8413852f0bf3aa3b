#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace callforge {

class Value;

using ValueList = std::vector<Value>;

struct ListObject {
  ValueList items;
};

struct DictObject {
  // Insertion-ordered; lookups are linear, which is fine for the sizes seed
  // problems produce.
  std::vector<std::pair<Value, Value>> items;

  [[nodiscard]] const Value *find(const Value &key) const;
  Value *find(const Value &key);
  void set(Value key, Value value);
  bool erase(const Value &key);
};

struct SetObject {
  ValueList items;

  [[nodiscard]] bool contains(const Value &v) const;
  void add(Value v);
};

/// Base for interpreter-only objects (functions, modules, bound methods).
struct RuntimeObject {
  virtual ~RuntimeObject() = default;
  [[nodiscard]] virtual std::string type_name() const = 0;
  [[nodiscard]] virtual std::string repr() const = 0;
};

struct NoneValue {
  friend bool operator==(NoneValue, NoneValue) { return true; }
};

struct TupleTag {};

/// A dynamically typed value with Python data-model semantics for the types
/// seed problems exchange. Lists, dicts and sets have reference semantics.
class Value {
 public:
  enum class Kind { None, Bool, Int, Float, Str, List, Tuple, Dict, Set, Object };

  Value() = default;
  Value(NoneValue) {}
  Value(bool b) : data_(b) {}
  Value(int v) : data_(static_cast<std::int64_t>(v)) {}
  Value(std::int64_t v) : data_(v) {}
  Value(double v) : data_(v) {}
  Value(std::string s) : data_(std::move(s)) {}
  Value(const char *s) : data_(std::string(s)) {}

  static Value list(ValueList items = {});
  static Value tuple(ValueList items = {});
  static Value dict();
  static Value set(ValueList items = {});
  static Value object(std::shared_ptr<RuntimeObject> obj);

  [[nodiscard]] Kind kind() const;
  [[nodiscard]] bool is_none() const { return kind() == Kind::None; }
  [[nodiscard]] bool is_bool() const { return kind() == Kind::Bool; }
  [[nodiscard]] bool is_int() const { return kind() == Kind::Int; }
  [[nodiscard]] bool is_float() const { return kind() == Kind::Float; }
  [[nodiscard]] bool is_str() const { return kind() == Kind::Str; }
  [[nodiscard]] bool is_list() const { return kind() == Kind::List; }
  [[nodiscard]] bool is_tuple() const { return kind() == Kind::Tuple; }
  [[nodiscard]] bool is_dict() const { return kind() == Kind::Dict; }
  [[nodiscard]] bool is_set() const { return kind() == Kind::Set; }
  [[nodiscard]] bool is_object() const { return kind() == Kind::Object; }
  /// int, float or bool (bool is an int subtype in Python).
  [[nodiscard]] bool is_number() const;

  [[nodiscard]] bool as_bool() const { return std::get<bool>(data_); }
  [[nodiscard]] std::int64_t as_int() const;  // accepts bool
  [[nodiscard]] double as_float() const;      // accepts int and bool
  [[nodiscard]] const std::string &as_str() const { return std::get<std::string>(data_); }
  [[nodiscard]] ValueList &items();  // list or tuple
  [[nodiscard]] const ValueList &items() const;
  [[nodiscard]] DictObject &dict_obj() const { return *std::get<std::shared_ptr<DictObject>>(data_); }
  [[nodiscard]] SetObject &set_obj() const { return *std::get<std::shared_ptr<SetObject>>(data_); }
  [[nodiscard]] const std::shared_ptr<RuntimeObject> &obj() const {
    return std::get<std::shared_ptr<RuntimeObject>>(data_);
  }

  [[nodiscard]] std::string type_name() const;
  /// Python repr(); floats use the shortest round-tripping form.
  [[nodiscard]] std::string repr() const;
  /// Python str(); differs from repr only for strings at top level.
  [[nodiscard]] std::string str() const;
  [[nodiscard]] bool truthy() const;

  /// True when both sides reference the same container (Python `is`).
  [[nodiscard]] bool identical(const Value &other) const;

 private:
  using Storage = std::variant<NoneValue, bool, std::int64_t, double, std::string,
                               std::shared_ptr<ListObject>, std::shared_ptr<const ValueList>,
                               std::shared_ptr<DictObject>, std::shared_ptr<SetObject>,
                               std::shared_ptr<RuntimeObject>>;
  Storage data_{NoneValue{}};
};

/// Python `==`: numeric kinds compare by value across int/float/bool.
bool py_equal(const Value &a, const Value &b);

/// Structural equality with absolute tolerance on numeric leaves.
bool approx_equal(const Value &a, const Value &b, double abs_tol);

std::string float_repr(double d);
std::string str_repr(std::string_view s);

class LiteralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a Python literal as produced by repr(): None, bools, ints, floats
/// (including inf/nan), strings, lists, tuples, dicts, sets and set().
Value parse_literal(std::string_view text);

/// Bank files carry JSON scalars and arrays; objects become dicts with string keys.
Value from_json(const nlohmann::json &j);
/// Lossy for tuples and sets (both become arrays).
nlohmann::json to_json(const Value &v);

// ---------------------------------------------------------------------------
// Type tags

enum class TypeTag {
  Int,
  Float,
  Bool,
  Str,
  ListInt,
  ListFloat,
  ListStr,
  ListBool,
  Tuple,
  Dict,
  None,
};

std::string_view to_string(TypeTag t);
std::optional<TypeTag> parse_type_tag(std::string_view s);

/// Observed runtime type of one value. `list[?]` (an empty list) is kept
/// distinct so that inference can unify it with other observations.
struct TypeObservation {
  enum class Status { Tag, EmptyList, Unsupported };
  Status status{Status::Unsupported};
  TypeTag tag{TypeTag::None};
  std::string detail;  // name of the offending type when unsupported
};

TypeObservation observe_type(const Value &v);

}  // namespace callforge
