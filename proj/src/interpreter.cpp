#include "callforge/interpreter.hpp"

#include <pthread.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "callforge/pylang.hpp"

namespace callforge {

namespace {

using py::BinOpKind;
using py::CmpKind;
using py::Expr;
using py::Stmt;
using py::UnaryKind;

struct PyError {
  std::string type;
  std::string message;
};

struct TimeoutSignal {};

[[noreturn]] void raise(std::string type, std::string message = {}) {
  throw PyError{std::move(type), std::move(message)};
}

using Kwargs = std::vector<std::pair<std::string, Value>>;

class Interpreter;

struct Frame;
using FramePtr = std::shared_ptr<Frame>;

struct Frame {
  std::unordered_map<std::string, Value> vars;
  const std::unordered_set<std::string> *locals{nullptr};  // null at module level
  FramePtr parent;                                         // enclosing function scope
};

struct FunctionObject : RuntimeObject {
  const Stmt *def{nullptr};
  std::shared_ptr<const py::Module> module;
  FramePtr closure;
  ValueList defaults;  // aligned with the trailing params that have defaults
  std::shared_ptr<std::unordered_set<std::string>> locals;

  [[nodiscard]] std::string type_name() const override { return "function"; }
  [[nodiscard]] std::string repr() const override { return "<function " + def->name + ">"; }
};

struct BuiltinFunction : RuntimeObject {
  std::string name;
  std::function<Value(Interpreter &, ValueList &, Kwargs &)> fn;

  [[nodiscard]] std::string type_name() const override { return "builtin_function_or_method"; }
  [[nodiscard]] std::string repr() const override { return "<built-in function " + name + ">"; }
};

struct BoundMethod : RuntimeObject {
  Value self;
  std::string name;

  [[nodiscard]] std::string type_name() const override { return "builtin_function_or_method"; }
  [[nodiscard]] std::string repr() const override {
    return "<built-in method " + name + " of " + self.type_name() + " object>";
  }
};

struct ModuleObject : RuntimeObject {
  std::string name;
  std::unordered_map<std::string, Value> attrs;

  [[nodiscard]] std::string type_name() const override { return "module"; }
  [[nodiscard]] std::string repr() const override { return "<module '" + name + "'>"; }
};

struct ExceptionClass : RuntimeObject {
  std::string name;
  [[nodiscard]] std::string type_name() const override { return "type"; }
  [[nodiscard]] std::string repr() const override { return "<class '" + name + "'>"; }
};

struct ExceptionInstance : RuntimeObject {
  std::string name;
  std::string message;
  [[nodiscard]] std::string type_name() const override { return name; }
  [[nodiscard]] std::string repr() const override { return name + "(" + str_repr(message) + ")"; }
};

struct TypeObject : RuntimeObject {
  std::string name;  // int, float, str, ...
  [[nodiscard]] std::string type_name() const override { return "type"; }
  [[nodiscard]] std::string repr() const override { return "<class '" + name + "'>"; }
};

struct RangeObject : RuntimeObject {
  std::int64_t start{0}, stop{0}, step{1};
  [[nodiscard]] std::int64_t size() const {
    if (step > 0) return stop > start ? (stop - start + step - 1) / step : 0;
    return start > stop ? (start - stop - step - 1) / (-step) : 0;
  }
  [[nodiscard]] std::string type_name() const override { return "range"; }
  [[nodiscard]] std::string repr() const override {
    std::string s = "range(" + std::to_string(start) + ", " + std::to_string(stop);
    if (step != 1) s += ", " + std::to_string(step);
    return s + ")";
  }
};

template <typename T>
T *as_object(const Value &v) {
  if (!v.is_object()) return nullptr;
  return dynamic_cast<T *>(v.obj().get());
}

// -- checked integer arithmetic ----------------------------------------------

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) raise("OverflowError", "integer result exceeds 64 bits");
  return r;
}
std::int64_t checked_sub(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_sub_overflow(a, b, &r)) raise("OverflowError", "integer result exceeds 64 bits");
  return r;
}
std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) raise("OverflowError", "integer result exceeds 64 bits");
  return r;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  if (b == 0) raise("ZeroDivisionError", "integer division or modulo by zero");
  if (a == std::numeric_limits<std::int64_t>::min() && b == -1) {
    raise("OverflowError", "integer result exceeds 64 bits");
  }
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  if (b == 0) raise("ZeroDivisionError", "integer division or modulo by zero");
  if (b == -1) return 0;
  std::int64_t m = a % b;
  if (m != 0 && ((m < 0) != (b < 0))) m += b;
  return m;
}

double check_float(double d) {
  if (std::isinf(d)) raise("OverflowError", "numerical result out of range");
  return d;
}

std::int64_t int_pow(std::int64_t base, std::int64_t exp) {
  std::int64_t result = 1;
  while (exp > 0) {
    if (exp & 1) result = checked_mul(result, base);
    exp >>= 1;
    if (exp > 0) base = checked_mul(base, base);
  }
  return result;
}

std::int64_t float_to_int(double d) {
  if (std::isnan(d)) raise("ValueError", "cannot convert float NaN to integer");
  if (std::isinf(d)) raise("OverflowError", "cannot convert float infinity to integer");
  double t = std::trunc(d);
  if (t >= 9.2233720368547758e18 || t < -9.2233720368547758e18) {
    raise("OverflowError", "integer result exceeds 64 bits");
  }
  return static_cast<std::int64_t>(t);
}

std::int64_t normalize_index(std::int64_t idx, std::size_t size, const char *what) {
  auto n = static_cast<std::int64_t>(size);
  if (idx < 0) idx += n;
  if (idx < 0 || idx >= n) raise("IndexError", std::string(what) + " index out of range");
  return idx;
}

// Python slice index normalization.
struct SliceBounds {
  std::int64_t start, stop, step;
};

SliceBounds slice_bounds(const Value &lo, const Value &hi, const Value &st, std::size_t size) {
  auto n = static_cast<std::int64_t>(size);
  auto to_int = [](const Value &v, const char *what) {
    if (v.is_int() || v.is_bool()) return v.as_int();
    raise("TypeError", std::string("slice ") + what + " must be an integer or None");
  };
  std::int64_t step = st.is_none() ? 1 : to_int(st, "step");
  if (step == 0) raise("ValueError", "slice step cannot be zero");
  std::int64_t start, stop;
  if (step > 0) {
    start = lo.is_none() ? 0 : to_int(lo, "start");
    stop = hi.is_none() ? n : to_int(hi, "stop");
    if (start < 0) start = std::max<std::int64_t>(0, start + n);
    if (stop < 0) stop = std::max<std::int64_t>(0, stop + n);
    start = std::min(start, n);
    stop = std::min(stop, n);
  } else {
    start = lo.is_none() ? n - 1 : to_int(lo, "start");
    stop = hi.is_none() ? -1 : to_int(hi, "stop");
    if (!lo.is_none()) {
      if (start < 0) start += n;
      if (start < 0) start = -1;
      if (start >= n) start = n - 1;
    }
    if (!hi.is_none()) {
      if (stop < 0) stop += n;
      if (stop < 0) stop = -1;
      if (stop >= n) stop = n - 1;
    }
  }
  return {start, stop, step};
}

template <typename Out, typename Get>
void for_each_slice_index(const SliceBounds &b, Get get, Out &out) {
  if (b.step > 0) {
    for (std::int64_t i = b.start; i < b.stop; i += b.step) out.push_back(get(i));
  } else {
    for (std::int64_t i = b.start; i > b.stop; i += b.step) out.push_back(get(i));
  }
}

// Python ordering; raises TypeError for unorderable pairs.
int compare_values(const Value &a, const Value &b, const char *op) {
  if (a.is_number() && b.is_number()) {
    if (a.is_float() || b.is_float()) {
      double x = a.as_float(), y = b.as_float();
      return x < y ? -1 : (x > y ? 1 : 0);
    }
    auto x = a.as_int(), y = b.as_int();
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  if (a.is_str() && b.is_str()) {
    int c = a.as_str().compare(b.as_str());
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  if ((a.is_list() && b.is_list()) || (a.is_tuple() && b.is_tuple())) {
    const auto &xs = a.items();
    const auto &ys = b.items();
    for (std::size_t i = 0; i < std::min(xs.size(), ys.size()); ++i) {
      if (!py_equal(xs[i], ys[i])) return compare_values(xs[i], ys[i], op);
    }
    return xs.size() < ys.size() ? -1 : (xs.size() > ys.size() ? 1 : 0);
  }
  raise("TypeError", std::string("'") + op + "' not supported between instances of '" +
                         a.type_name() + "' and '" + b.type_name() + "'");
}

bool is_hashable(const Value &v) {
  switch (v.kind()) {
    case Value::Kind::List:
    case Value::Kind::Dict:
    case Value::Kind::Set: return false;
    case Value::Kind::Tuple:
      return std::all_of(v.items().begin(), v.items().end(), is_hashable);
    default: return true;
  }
}

void require_hashable(const Value &v) {
  if (!is_hashable(v)) raise("TypeError", "unhashable type: '" + v.type_name() + "'");
}

// Names a function binds locally (not descending into nested defs).
void collect_locals(const py::Block &body, std::unordered_set<std::string> &out) {
  std::function<void(const Expr &)> target = [&](const Expr &t) {
    if (t.kind == Expr::Kind::Name) out.insert(t.id);
    if (t.kind == Expr::Kind::Tuple || t.kind == Expr::Kind::List) {
      for (const auto &e : t.elts) target(*e);
    }
  };
  for (const auto &s : body) {
    switch (s->kind) {
      case Stmt::Kind::Assign:
      case Stmt::Kind::AugAssign:
      case Stmt::Kind::For:
        for (const auto &t : s->targets) target(*t);
        break;
      case Stmt::Kind::FunctionDef: out.insert(s->name); continue;
      case Stmt::Kind::Import:
      case Stmt::Kind::ImportFrom:
        for (const auto &[n, as] : s->imports) out.insert(as);
        break;
      default: break;
    }
    collect_locals(s->body, out);
    collect_locals(s->orelse, out);
  }
}

enum class Flow { Normal, Return, Break, Continue };

class Interpreter {
 public:
  Interpreter(const ExecLimits &limits, const std::vector<std::string> &trace)
      : limits_(limits), trace_(trace.begin(), trace.end()) {
    deadline_ = std::chrono::steady_clock::now() + limits.timeout;
    install_builtins();
  }

  std::map<std::string, std::string> traces;
  std::string output;

  void run_module(std::shared_ptr<const py::Module> module) {
    module_ = std::move(module);
    globals_ = std::make_shared<Frame>();
    Value ret;
    exec_block(module_->body, *globals_, ret);
  }

  Value call_entry(std::string_view name, ValueList args) {
    auto it = globals_->vars.find(std::string(name));
    if (it == globals_->vars.end()) raise("NameError", "name '" + std::string(name) + "' is not defined");
    Kwargs kw;
    return call(it->second, args, kw);
  }

  // -- execution ----------------------------------------------------------

  void tick() {
    if ((++steps_ & 0x3ff) == 0 && std::chrono::steady_clock::now() > deadline_) {
      throw TimeoutSignal{};
    }
  }

  void check_size(std::size_t n) const {
    if (n > limits_.max_container_size) raise("MemoryError", "container too large");
  }

  Flow exec_block(const py::Block &body, Frame &frame, Value &ret) {
    for (const auto &s : body) {
      Flow f = exec_stmt(*s, frame, ret);
      if (f != Flow::Normal) return f;
    }
    return Flow::Normal;
  }

  Flow exec_stmt(const Stmt &s, Frame &frame, Value &ret) {
    tick();
    switch (s.kind) {
      case Stmt::Kind::Pass: return Flow::Normal;
      case Stmt::Kind::Break: return Flow::Break;
      case Stmt::Kind::Continue: return Flow::Continue;
      case Stmt::Kind::Return:
        ret = s.value ? eval(*s.value, frame) : Value();
        return Flow::Return;
      case Stmt::Kind::ExprStmt: eval(*s.value, frame); return Flow::Normal;
      case Stmt::Kind::Assign: {
        Value v = eval(*s.value, frame);
        for (const auto &t : s.targets) assign(*t, v, frame);
        return Flow::Normal;
      }
      case Stmt::Kind::AugAssign: {
        const Expr &t = *s.targets.front();
        if (t.kind == Expr::Kind::Subscript) {
          Value container = eval(*t.left, frame);
          Value key = eval(*t.right, frame);
          Value cur = subscript(container, key);
          Value rhs = eval(*s.value, frame);
          store_subscript(container, key, binop(s.augop, cur, rhs, true));
        } else {
          Value cur = eval(t, frame);
          Value rhs = eval(*s.value, frame);
          assign(t, binop(s.augop, cur, rhs, true), frame);
        }
        return Flow::Normal;
      }
      case Stmt::Kind::If: {
        if (eval(*s.value, frame).truthy()) return exec_block(s.body, frame, ret);
        return exec_block(s.orelse, frame, ret);
      }
      case Stmt::Kind::While: {
        while (true) {
          tick();
          if (!eval(*s.value, frame).truthy()) break;
          Flow f = exec_block(s.body, frame, ret);
          if (f == Flow::Break) break;
          if (f == Flow::Return) return f;
        }
        return Flow::Normal;
      }
      case Stmt::Kind::For: return exec_for(s, frame, ret);
      case Stmt::Kind::FunctionDef: {
        auto fn = std::make_shared<FunctionObject>();
        fn->def = &s;
        fn->module = module_;
        fn->locals = std::make_shared<std::unordered_set<std::string>>();
        for (const auto &p : s.params) fn->locals->insert(p.name);
        collect_locals(s.body, *fn->locals);
        for (const auto &p : s.params) {
          if (p.default_value) fn->defaults.push_back(eval(*p.default_value, frame));
        }
        if (frame.locals != nullptr) fn->closure = shared_frame(frame);
        bind(frame, s.name, Value::object(fn));
        return Flow::Normal;
      }
      case Stmt::Kind::Import: {
        for (const auto &[mod, as] : s.imports) bind(frame, as, import_module(mod));
        return Flow::Normal;
      }
      case Stmt::Kind::ImportFrom: {
        Value m = import_module(s.name);
        auto *mo = as_object<ModuleObject>(m);
        for (const auto &[n, as] : s.imports) {
          auto it = mo->attrs.find(n);
          if (it == mo->attrs.end()) {
            raise("ImportError", "cannot import name '" + n + "' from '" + s.name + "'");
          }
          bind(frame, as, it->second);
        }
        return Flow::Normal;
      }
      case Stmt::Kind::Assert: {
        if (eval(*s.value, frame).truthy()) return Flow::Normal;
        raise("AssertionError", s.message ? eval(*s.message, frame).str() : std::string());
      }
      case Stmt::Kind::Raise: {
        if (!s.value) raise("RuntimeError", "No active exception to reraise");
        Value v = eval(*s.value, frame);
        if (auto *cls = as_object<ExceptionClass>(v)) raise(cls->name);
        if (auto *inst = as_object<ExceptionInstance>(v)) raise(inst->name, inst->message);
        raise("TypeError", "exceptions must derive from BaseException");
      }
    }
    return Flow::Normal;
  }

  Flow exec_for(const Stmt &s, Frame &frame, Value &ret) {
    Value iterable = eval(*s.value, frame);
    const Expr &target = *s.targets.front();
    auto body = [&](const Value &item) -> std::optional<Flow> {
      tick();
      assign(target, item, frame);
      Flow f = exec_block(s.body, frame, ret);
      if (f == Flow::Break) return Flow::Normal;
      if (f == Flow::Return) return f;
      return std::nullopt;
    };
    if (auto *r = as_object<RangeObject>(iterable)) {
      auto n = r->size();
      for (std::int64_t i = 0; i < n; ++i) {
        if (auto f = body(Value(r->start + i * r->step))) return *f;
      }
      return Flow::Normal;
    }
    if (iterable.is_list()) {
      // Index-based so appends during iteration are observed, as in CPython.
      for (std::size_t i = 0; i < iterable.items().size(); ++i) {
        Value item = iterable.items()[i];
        if (auto f = body(item)) return *f;
      }
      return Flow::Normal;
    }
    ValueList items = materialize(iterable);
    for (const auto &item : items) {
      if (auto f = body(item)) return *f;
    }
    return Flow::Normal;
  }

  FramePtr shared_frame(Frame &frame) {
    // Function frames are owned by the shared_ptr pushed in call_function().
    for (auto it = live_frames_.rbegin(); it != live_frames_.rend(); ++it) {
      if (auto p = it->lock(); p && p.get() == &frame) return p;
    }
    return nullptr;
  }

  void bind(Frame &frame, const std::string &name, Value v) { frame.vars[name] = std::move(v); }

  void assign(const Expr &target, const Value &v, Frame &frame) {
    switch (target.kind) {
      case Expr::Kind::Name: bind(frame, target.id, v); return;
      case Expr::Kind::Tuple:
      case Expr::Kind::List: {
        ValueList items = materialize(v);
        if (items.size() != target.elts.size()) {
          if (items.size() > target.elts.size()) {
            raise("ValueError", "too many values to unpack (expected " +
                                    std::to_string(target.elts.size()) + ")");
          }
          raise("ValueError", "not enough values to unpack (expected " +
                                  std::to_string(target.elts.size()) + ", got " +
                                  std::to_string(items.size()) + ")");
        }
        for (std::size_t i = 0; i < items.size(); ++i) assign(*target.elts[i], items[i], frame);
        return;
      }
      case Expr::Kind::Subscript: {
        Value container = eval(*target.left, frame);
        Value key = eval(*target.right, frame);
        store_subscript(container, key, v);
        return;
      }
      case Expr::Kind::Attribute:
        raise("AttributeError", "'" + eval(*target.left, frame).type_name() +
                                    "' object attribute '" + target.id + "' is read-only");
      default: raise("SyntaxError", "cannot assign to expression");
    }
  }

  void store_subscript(Value &container, const Value &key, const Value &v) {
    if (container.is_list()) {
      if (as_object<RangeObject>(key) != nullptr || key.is_tuple()) {
        raise("TypeError", "list indices must be integers or slices");
      }
      if (!(key.is_int() || key.is_bool())) {
        raise("TypeError", "list indices must be integers or slices, not " + key.type_name());
      }
      auto &items = container.items();
      items[static_cast<std::size_t>(normalize_index(key.as_int(), items.size(), "list assignment"))] = v;
      return;
    }
    if (container.is_dict()) {
      require_hashable(key);
      container.dict_obj().set(key, v);
      return;
    }
    raise("TypeError", "'" + container.type_name() + "' object does not support item assignment");
  }

  // -- names --------------------------------------------------------------

  Value lookup(const std::string &name, Frame &frame) {
    if (frame.locals != nullptr) {
      if (auto it = frame.vars.find(name); it != frame.vars.end()) return it->second;
      if (frame.locals->count(name) != 0) {
        raise("UnboundLocalError",
              "cannot access local variable '" + name + "' where it is not associated with a value");
      }
      for (Frame *f = frame.parent.get(); f != nullptr; f = f->parent.get()) {
        if (auto it = f->vars.find(name); it != f->vars.end()) return it->second;
        if (f->locals != nullptr && f->locals->count(name) != 0) {
          raise("NameError", "cannot access free variable '" + name +
                                 "' where it is not associated with a value in enclosing scope");
        }
      }
    }
    if (auto it = globals_->vars.find(name); it != globals_->vars.end()) return it->second;
    if (auto it = builtins_.find(name); it != builtins_.end()) return it->second;
    raise("NameError", "name '" + name + "' is not defined");
  }

  // -- expressions --------------------------------------------------------

  Value eval(const Expr &e, Frame &frame) {
    switch (e.kind) {
      case Expr::Kind::Constant: return e.constant;
      case Expr::Kind::Name: return lookup(e.id, frame);
      case Expr::Kind::List: {
        ValueList xs;
        xs.reserve(e.elts.size());
        for (const auto &x : e.elts) xs.push_back(eval(*x, frame));
        return Value::list(std::move(xs));
      }
      case Expr::Kind::Tuple: {
        ValueList xs;
        for (const auto &x : e.elts) xs.push_back(eval(*x, frame));
        return Value::tuple(std::move(xs));
      }
      case Expr::Kind::Set: {
        ValueList xs;
        for (const auto &x : e.elts) {
          xs.push_back(eval(*x, frame));
          require_hashable(xs.back());
        }
        return Value::set(std::move(xs));
      }
      case Expr::Kind::Dict: {
        Value d = Value::dict();
        for (std::size_t i = 0; i < e.elts.size(); ++i) {
          Value k = eval(*e.elts[i], frame);
          require_hashable(k);
          d.dict_obj().set(k, eval(*e.values[i], frame));
        }
        return d;
      }
      case Expr::Kind::BinOp: {
        Value l = eval(*e.left, frame);
        Value r = eval(*e.right, frame);
        return binop(e.binop, l, r, false);
      }
      case Expr::Kind::UnaryOp: return unary(e.unop, eval(*e.left, frame));
      case Expr::Kind::BoolOp: {
        Value v;
        for (const auto &x : e.values) {
          v = eval(*x, frame);
          if (e.is_and ? !v.truthy() : v.truthy()) return v;
        }
        return v;
      }
      case Expr::Kind::Compare: {
        Value l = eval(*e.left, frame);
        for (std::size_t i = 0; i < e.cmpops.size(); ++i) {
          Value r = eval(*e.values[i], frame);
          if (!compare(e.cmpops[i], l, r)) return Value(false);
          l = std::move(r);
        }
        return Value(true);
      }
      case Expr::Kind::Call: {
        Value callee = eval(*e.left, frame);
        ValueList args;
        args.reserve(e.args.size());
        for (const auto &a : e.args) args.push_back(eval(*a, frame));
        Kwargs kw;
        for (const auto &[n, a] : e.kwargs) kw.emplace_back(n, eval(*a, frame));
        return call(callee, args, kw);
      }
      case Expr::Kind::Attribute: return attribute(eval(*e.left, frame), e.id);
      case Expr::Kind::Subscript: {
        Value container = eval(*e.left, frame);
        if (e.right->kind == Expr::Kind::Slice) {
          const Expr &sl = *e.right;
          Value lo = sl.left ? eval(*sl.left, frame) : Value();
          Value hi = sl.right ? eval(*sl.right, frame) : Value();
          Value st = sl.step ? eval(*sl.step, frame) : Value();
          return slice(container, lo, hi, st);
        }
        return subscript(container, eval(*e.right, frame));
      }
      case Expr::Kind::Slice: raise("SyntaxError", "invalid slice");
    }
    return Value();
  }

  Value unary(UnaryKind op, const Value &v) {
    switch (op) {
      case UnaryKind::Not: return Value(!v.truthy());
      case UnaryKind::Neg:
        if (v.is_float()) return Value(-v.as_float());
        if (v.is_int() || v.is_bool()) return Value(checked_sub(0, v.as_int()));
        break;
      case UnaryKind::Pos:
        if (v.is_float()) return v;
        if (v.is_int() || v.is_bool()) return Value(v.as_int());
        break;
      case UnaryKind::Invert:
        if (v.is_int() || v.is_bool()) return Value(~v.as_int());
        break;
    }
    static const char *names[] = {"-", "+", "not", "~"};
    raise("TypeError", std::string("bad operand type for unary ") + names[static_cast<int>(op)] +
                           ": '" + v.type_name() + "'");
  }

  static const char *binop_symbol(BinOpKind k) {
    switch (k) {
      case BinOpKind::Add: return "+";
      case BinOpKind::Sub: return "-";
      case BinOpKind::Mul: return "*";
      case BinOpKind::Div: return "/";
      case BinOpKind::FloorDiv: return "//";
      case BinOpKind::Mod: return "%";
      case BinOpKind::Pow: return "**";
      case BinOpKind::BitAnd: return "&";
      case BinOpKind::BitOr: return "|";
      case BinOpKind::BitXor: return "^";
      case BinOpKind::LShift: return "<<";
      case BinOpKind::RShift: return ">>";
    }
    return "?";
  }

  [[noreturn]] void binop_type_error(BinOpKind k, const Value &l, const Value &r) {
    raise("TypeError", std::string("unsupported operand type(s) for ") + binop_symbol(k) + ": '" +
                           l.type_name() + "' and '" + r.type_name() + "'");
  }

  Value repeat(const Value &seq, std::int64_t n) {
    if (n <= 0) return seq.is_str() ? Value(std::string()) : seq.is_list() ? Value::list() : Value::tuple();
    if (seq.is_str()) {
      check_size(seq.as_str().size() * static_cast<std::size_t>(n));
      std::string out;
      for (std::int64_t i = 0; i < n; ++i) out += seq.as_str();
      return Value(std::move(out));
    }
    check_size(seq.items().size() * static_cast<std::size_t>(n));
    ValueList out;
    for (std::int64_t i = 0; i < n; ++i) out.insert(out.end(), seq.items().begin(), seq.items().end());
    return seq.is_list() ? Value::list(std::move(out)) : Value::tuple(std::move(out));
  }

  Value binop(BinOpKind k, Value &l, const Value &r, bool inplace) {
    bool ln = l.is_number(), rn = r.is_number();
    if (ln && rn) {
      bool fl = l.is_float() || r.is_float();
      switch (k) {
        case BinOpKind::Add:
          return fl ? Value(check_float(l.as_float() + r.as_float())) : Value(checked_add(l.as_int(), r.as_int()));
        case BinOpKind::Sub:
          return fl ? Value(check_float(l.as_float() - r.as_float())) : Value(checked_sub(l.as_int(), r.as_int()));
        case BinOpKind::Mul:
          return fl ? Value(check_float(l.as_float() * r.as_float())) : Value(checked_mul(l.as_int(), r.as_int()));
        case BinOpKind::Div: {
          double d = r.as_float();
          if (d == 0.0) raise("ZeroDivisionError", fl ? "float division by zero" : "division by zero");
          if (!fl) {
            // int / int: exact when both fit a double mantissa.
            return Value(check_float(static_cast<double>(l.as_int()) / static_cast<double>(r.as_int())));
          }
          return Value(check_float(l.as_float() / d));
        }
        case BinOpKind::FloorDiv: {
          if (!fl) return Value(floor_div(l.as_int(), r.as_int()));
          double d = r.as_float();
          if (d == 0.0) raise("ZeroDivisionError", "float floor division by zero");
          double a = l.as_float();
          double mod = std::fmod(a, d);
          double div = (a - mod) / d;
          if (mod != 0.0 && ((d < 0) != (mod < 0))) div -= 1.0;
          if (div == 0.0) return Value(std::copysign(0.0, a / d));
          double fd = std::floor(div);
          if (div - fd > 0.5) fd += 1.0;
          return Value(fd);
        }
        case BinOpKind::Mod: {
          if (!fl) return Value(floor_mod(l.as_int(), r.as_int()));
          double d = r.as_float();
          if (d == 0.0) raise("ZeroDivisionError", "float modulo");
          double m = std::fmod(l.as_float(), d);
          if (m != 0.0 && ((m < 0) != (d < 0))) m += d;
          if (m == 0.0) m = std::copysign(0.0, d);
          return Value(m);
        }
        case BinOpKind::Pow: {
          if (!fl && r.as_int() >= 0) return Value(int_pow(l.as_int(), r.as_int()));
          double base = l.as_float(), ex = r.as_float();
          if (base == 0.0 && ex < 0) {
            raise("ZeroDivisionError", "0.0 cannot be raised to a negative power");
          }
          if (base < 0 && std::floor(ex) != ex) {
            raise("ValueError", "complex results are not supported");
          }
          double p = std::pow(base, ex);
          if (std::isinf(p) && !std::isinf(base)) raise("OverflowError", "(34, 'Numerical result out of range')");
          return Value(p);
        }
        case BinOpKind::BitAnd:
        case BinOpKind::BitOr:
        case BinOpKind::BitXor:
        case BinOpKind::LShift:
        case BinOpKind::RShift: {
          if (fl) binop_type_error(k, l, r);
          auto a = l.as_int(), b = r.as_int();
          if (k == BinOpKind::BitAnd) return (l.is_bool() && r.is_bool()) ? Value(static_cast<bool>(a & b)) : Value(a & b);
          if (k == BinOpKind::BitOr) return (l.is_bool() && r.is_bool()) ? Value(static_cast<bool>(a | b)) : Value(a | b);
          if (k == BinOpKind::BitXor) return (l.is_bool() && r.is_bool()) ? Value(static_cast<bool>(a ^ b)) : Value(a ^ b);
          if (b < 0) raise("ValueError", "negative shift count");
          if (k == BinOpKind::RShift) return Value(b >= 64 ? (a < 0 ? -1 : 0) : (a >> b));
          if (b >= 63 && a != 0) raise("OverflowError", "integer result exceeds 64 bits");
          return Value(checked_mul(a, std::int64_t{1} << b));
        }
      }
    }
    if (k == BinOpKind::Add) {
      if (l.is_str() && r.is_str()) return Value(l.as_str() + r.as_str());
      if (l.is_list() && r.is_list()) {
        if (inplace) {
          ValueList extra = r.items();
          l.items().insert(l.items().end(), extra.begin(), extra.end());
          check_size(l.items().size());
          return l;
        }
        ValueList out = l.items();
        out.insert(out.end(), r.items().begin(), r.items().end());
        check_size(out.size());
        return Value::list(std::move(out));
      }
      if (l.is_tuple() && r.is_tuple()) {
        ValueList out = l.items();
        out.insert(out.end(), r.items().begin(), r.items().end());
        return Value::tuple(std::move(out));
      }
      if (l.is_list() && inplace) {
        ValueList extra = materialize(r);
        l.items().insert(l.items().end(), extra.begin(), extra.end());
        return l;
      }
      if (l.is_str() || r.is_str()) {
        raise("TypeError", l.is_str() ? "can only concatenate str (not \"" + r.type_name() + "\") to str"
                                      : "unsupported operand type(s) for +: '" + l.type_name() +
                                            "' and '" + r.type_name() + "'");
      }
      if (l.is_list()) {
        raise("TypeError", "can only concatenate list (not \"" + r.type_name() + "\") to list");
      }
    }
    if (k == BinOpKind::Mul) {
      bool lseq = l.is_str() || l.is_list() || l.is_tuple();
      bool rseq = r.is_str() || r.is_list() || r.is_tuple();
      if (lseq && (r.is_int() || r.is_bool())) return repeat(l, r.as_int());
      if (rseq && (l.is_int() || l.is_bool())) return repeat(r, l.as_int());
      if (lseq || rseq) {
        raise("TypeError", "can't multiply sequence by non-int of type '" +
                               (lseq ? r.type_name() : l.type_name()) + "'");
      }
    }
    if (k == BinOpKind::Sub && l.is_set() && r.is_set()) {
      ValueList out;
      for (const auto &x : l.set_obj().items) {
        if (!r.set_obj().contains(x)) out.push_back(x);
      }
      return Value::set(std::move(out));
    }
    if ((k == BinOpKind::BitAnd || k == BinOpKind::BitOr) && l.is_set() && r.is_set()) {
      ValueList out;
      if (k == BinOpKind::BitOr) {
        out = l.set_obj().items;
        out.insert(out.end(), r.set_obj().items.begin(), r.set_obj().items.end());
      } else {
        for (const auto &x : l.set_obj().items) {
          if (r.set_obj().contains(x)) out.push_back(x);
        }
      }
      return Value::set(std::move(out));
    }
    if (k == BinOpKind::Mod && l.is_str()) {
      raise("TypeError", "printf-style string formatting is not supported");
    }
    binop_type_error(k, l, r);
  }

  bool contains(const Value &container, const Value &item) {
    switch (container.kind()) {
      case Value::Kind::Str:
        if (!item.is_str()) {
          raise("TypeError", "'in <string>' requires string as left operand, not " + item.type_name());
        }
        return container.as_str().find(item.as_str()) != std::string::npos;
      case Value::Kind::List:
      case Value::Kind::Tuple:
        return std::any_of(container.items().begin(), container.items().end(),
                           [&](const Value &x) { return py_equal(x, item); });
      case Value::Kind::Dict: require_hashable(item); return container.dict_obj().find(item) != nullptr;
      case Value::Kind::Set: require_hashable(item); return container.set_obj().contains(item);
      default: break;
    }
    if (auto *r = as_object<RangeObject>(container)) {
      if (!item.is_number() || item.is_float()) return false;
      auto v = item.as_int();
      if (r->step > 0 ? (v < r->start || v >= r->stop) : (v > r->start || v <= r->stop)) return false;
      return (v - r->start) % r->step == 0;
    }
    raise("TypeError", "argument of type '" + container.type_name() + "' is not iterable");
  }

  bool compare(CmpKind op, const Value &l, const Value &r) {
    switch (op) {
      case CmpKind::Eq: return py_equal(l, r);
      case CmpKind::NotEq: return !py_equal(l, r);
      case CmpKind::Lt: return compare_values(l, r, "<") < 0;
      case CmpKind::LtE: return compare_values(l, r, "<=") <= 0;
      case CmpKind::Gt: return compare_values(l, r, ">") > 0;
      case CmpKind::GtE: return compare_values(l, r, ">=") >= 0;
      case CmpKind::In: return contains(r, l);
      case CmpKind::NotIn: return !contains(r, l);
      case CmpKind::Is: return l.identical(r);
      case CmpKind::IsNot: return !l.identical(r);
    }
    return false;
  }

  Value subscript(const Value &container, const Value &key) {
    switch (container.kind()) {
      case Value::Kind::List:
      case Value::Kind::Tuple: {
        if (!(key.is_int() || key.is_bool())) {
          raise("TypeError", std::string(container.is_list() ? "list" : "tuple") +
                                 " indices must be integers or slices, not " + key.type_name());
        }
        const auto &xs = container.items();
        return xs[static_cast<std::size_t>(
            normalize_index(key.as_int(), xs.size(), container.is_list() ? "list" : "tuple"))];
      }
      case Value::Kind::Str: {
        if (!(key.is_int() || key.is_bool())) {
          raise("TypeError", "string indices must be integers, not '" + key.type_name() + "'");
        }
        const auto &s = container.as_str();
        return Value(std::string(1, s[static_cast<std::size_t>(normalize_index(key.as_int(), s.size(), "string"))]));
      }
      case Value::Kind::Dict: {
        require_hashable(key);
        const Value *v = container.dict_obj().find(key);
        if (v == nullptr) raise("KeyError", key.repr());
        return *v;
      }
      default: break;
    }
    if (auto *r = as_object<RangeObject>(container)) {
      if (!(key.is_int() || key.is_bool())) raise("TypeError", "range indices must be integers or slices");
      auto idx = normalize_index(key.as_int(), static_cast<std::size_t>(r->size()), "range object");
      return Value(r->start + idx * r->step);
    }
    raise("TypeError", "'" + container.type_name() + "' object is not subscriptable");
  }

  Value slice(const Value &container, const Value &lo, const Value &hi, const Value &st) {
    if (container.is_str()) {
      const auto &s = container.as_str();
      auto b = slice_bounds(lo, hi, st, s.size());
      std::string out;
      for_each_slice_index(b, [&](std::int64_t i) { return s[static_cast<std::size_t>(i)]; }, out);
      return Value(std::move(out));
    }
    if (container.is_list() || container.is_tuple()) {
      const auto &xs = container.items();
      auto b = slice_bounds(lo, hi, st, xs.size());
      ValueList out;
      for_each_slice_index(b, [&](std::int64_t i) { return xs[static_cast<std::size_t>(i)]; }, out);
      return container.is_list() ? Value::list(std::move(out)) : Value::tuple(std::move(out));
    }
    if (auto *r = as_object<RangeObject>(container)) {
      ValueList all = materialize(container);
      (void)r;
      auto b = slice_bounds(lo, hi, st, all.size());
      ValueList out;
      for_each_slice_index(b, [&](std::int64_t i) { return all[static_cast<std::size_t>(i)]; }, out);
      return Value::list(std::move(out));
    }
    raise("TypeError", "'" + container.type_name() + "' object is not subscriptable");
  }

  ValueList materialize(const Value &v) {
    switch (v.kind()) {
      case Value::Kind::List:
      case Value::Kind::Tuple: return v.items();
      case Value::Kind::Str: {
        ValueList out;
        for (char c : v.as_str()) out.emplace_back(std::string(1, c));
        return out;
      }
      case Value::Kind::Dict: {
        ValueList out;
        for (const auto &kv : v.dict_obj().items) out.push_back(kv.first);
        return out;
      }
      case Value::Kind::Set: return v.set_obj().items;
      default: break;
    }
    if (auto *r = as_object<RangeObject>(v)) {
      auto n = r->size();
      check_size(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
      ValueList out;
      out.reserve(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) out.emplace_back(r->start + i * r->step);
      return out;
    }
    raise("TypeError", "'" + v.type_name() + "' object is not iterable");
  }

  Value attribute(const Value &obj, const std::string &name) {
    if (auto *m = as_object<ModuleObject>(obj)) {
      auto it = m->attrs.find(name);
      if (it == m->attrs.end()) raise("AttributeError", "module '" + m->name + "' has no attribute '" + name + "'");
      return it->second;
    }
    if (has_method(obj, name)) {
      auto bm = std::make_shared<BoundMethod>();
      bm->self = obj;
      bm->name = name;
      return Value::object(bm);
    }
    raise("AttributeError", "'" + obj.type_name() + "' object has no attribute '" + name + "'");
  }

  // -- calls --------------------------------------------------------------

  Value call(const Value &callee, ValueList &args, Kwargs &kw) {
    if (auto *fn = as_object<FunctionObject>(callee)) return call_function(*fn, args, kw);
    if (auto *bf = as_object<BuiltinFunction>(callee)) return bf->fn(*this, args, kw);
    if (auto *bm = as_object<BoundMethod>(callee)) return call_method(bm->self, bm->name, args, kw);
    if (auto *cls = as_object<ExceptionClass>(callee)) {
      auto inst = std::make_shared<ExceptionInstance>();
      inst->name = cls->name;
      if (!args.empty()) inst->message = args.front().str();
      return Value::object(inst);
    }
    if (auto *t = as_object<TypeObject>(callee)) return call(constructors_.at(t->name), args, kw);
    raise("TypeError", "'" + callee.type_name() + "' object is not callable");
  }

  Value call_function(const FunctionObject &fn, ValueList &args, Kwargs &kw) {
    const auto &params = fn.def->params;
    if (args.size() > params.size()) {
      raise("TypeError", fn.def->name + "() takes " + std::to_string(params.size()) +
                             " positional arguments but " + std::to_string(args.size()) + " were given");
    }
    auto frame = std::make_shared<Frame>();
    frame->locals = fn.locals.get();
    frame->parent = fn.closure;
    for (std::size_t i = 0; i < args.size(); ++i) frame->vars[params[i].name] = args[i];
    for (auto &[name, v] : kw) {
      auto it = std::find_if(params.begin(), params.end(), [&](const py::Param &p) { return p.name == name; });
      if (it == params.end()) {
        raise("TypeError", fn.def->name + "() got an unexpected keyword argument '" + name + "'");
      }
      if (frame->vars.count(name) != 0) {
        raise("TypeError", fn.def->name + "() got multiple values for argument '" + name + "'");
      }
      frame->vars[name] = v;
    }
    std::size_t first_default = params.size() - fn.defaults.size();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (frame->vars.count(params[i].name) != 0) continue;
      if (i >= first_default) {
        frame->vars[params[i].name] = fn.defaults[i - first_default];
      } else {
        raise("TypeError", fn.def->name + "() missing required positional argument: '" + params[i].name + "'");
      }
    }
    if (++depth_ > limits_.max_recursion_depth) {
      --depth_;
      raise("RecursionError", "maximum recursion depth exceeded");
    }
    live_frames_.push_back(frame);
    Value ret;
    try {
      exec_block(fn.def->body, *frame, ret);
    } catch (...) {
      --depth_;
      live_frames_.pop_back();
      throw;
    }
    --depth_;
    live_frames_.pop_back();
    if (!trace_.empty() && trace_.count(fn.def->name) != 0 && fn.closure == nullptr) {
      traces[fn.def->name] = ret.repr();
    }
    return ret;
  }

  static void expect_args(const std::string &name, const ValueList &args, std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi) {
      if (lo == hi) {
        raise("TypeError", name + "() takes exactly " + std::to_string(lo) + " argument" +
                               (lo == 1 ? "" : "s") + " (" + std::to_string(args.size()) + " given)");
      }
      raise("TypeError", name + "() expected at most " + std::to_string(hi) + " arguments, got " +
                             std::to_string(args.size()));
    }
  }

  static const Value *kwarg(const Kwargs &kw, std::string_view name) {
    for (const auto &[n, v] : kw) {
      if (n == name) return &v;
    }
    return nullptr;
  }

  static void reject_kwargs(const std::string &name, const Kwargs &kw, std::initializer_list<std::string_view> allowed = {}) {
    for (const auto &[n, v] : kw) {
      if (std::find(allowed.begin(), allowed.end(), n) == allowed.end()) {
        raise("TypeError", name + "() got an unexpected keyword argument '" + n + "'");
      }
    }
  }

  bool has_method(const Value &obj, const std::string &name) const {
    static const std::unordered_set<std::string> list_methods = {
        "append", "extend", "pop", "insert", "remove", "index", "count", "sort", "reverse", "copy", "clear"};
    static const std::unordered_set<std::string> str_methods = {
        "split", "join", "strip", "lstrip", "rstrip", "lower", "upper", "replace", "startswith",
        "endswith", "find", "rfind", "count", "isdigit", "isalpha", "isalnum", "isspace", "isupper",
        "islower", "capitalize", "title", "swapcase", "index", "zfill", "center", "ljust", "rjust", "isnumeric", "isdecimal"};
    static const std::unordered_set<std::string> dict_methods = {"get", "keys", "values", "items", "pop",
                                                                 "setdefault", "update", "copy", "clear"};
    static const std::unordered_set<std::string> set_methods = {"add", "remove", "discard", "union",
                                                                "intersection", "difference", "copy", "pop"};
    static const std::unordered_set<std::string> tuple_methods = {"index", "count"};
    switch (obj.kind()) {
      case Value::Kind::List: return list_methods.count(name) != 0;
      case Value::Kind::Str: return str_methods.count(name) != 0;
      case Value::Kind::Dict: return dict_methods.count(name) != 0;
      case Value::Kind::Set: return set_methods.count(name) != 0;
      case Value::Kind::Tuple: return tuple_methods.count(name) != 0;
      case Value::Kind::Float: return name == "is_integer";
      case Value::Kind::Int: return name == "bit_length";
      default: return false;
    }
  }

  Value sorted_copy(ValueList items, Kwargs &kw, const std::string &fname) {
    reject_kwargs(fname, kw, {"reverse", "key"});
    const Value *key = kwarg(kw, "key");
    const Value *rev = kwarg(kw, "reverse");
    std::vector<Value> keys;
    if (key != nullptr && !key->is_none()) {
      for (const auto &x : items) {
        ValueList a{x};
        Kwargs none;
        keys.push_back(call(*key, a, none));
      }
    } else {
      keys = items;
    }
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return compare_values(keys[a], keys[b], "<") < 0;
    });
    ValueList out;
    out.reserve(items.size());
    for (auto i : order) out.push_back(items[i]);
    if (rev != nullptr && rev->truthy()) {
      // Reverse sort stays stable for equal keys, like CPython.
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return compare_values(keys[b], keys[a], "<") < 0;
      });
      out.clear();
      for (auto i : order) out.push_back(items[i]);
    }
    return Value::list(std::move(out));
  }

  static std::string strip_chars(const std::string &s, const std::string &chars, bool left, bool right) {
    std::size_t b = 0, e = s.size();
    if (left) {
      while (b < e && chars.find(s[b]) != std::string::npos) ++b;
    }
    if (right) {
      while (e > b && chars.find(s[e - 1]) != std::string::npos) --e;
    }
    return s.substr(b, e - b);
  }

  Value call_method(Value self, const std::string &name, ValueList &args, Kwargs &kw) {
    const std::string qual = self.type_name() + "." + name;
    if (self.is_list()) {
      auto &items = self.items();
      if (name == "append") { reject_kwargs(qual, kw); expect_args(qual, args, 1, 1); items.push_back(args[0]); check_size(items.size()); return Value(); }
      if (name == "extend") { reject_kwargs(qual, kw); expect_args(qual, args, 1, 1); auto more = materialize(args[0]); items.insert(items.end(), more.begin(), more.end()); check_size(items.size()); return Value(); }
      if (name == "pop") {
        reject_kwargs(qual, kw);
        expect_args(qual, args, 0, 1);
        if (items.empty()) raise("IndexError", "pop from empty list");
        std::int64_t idx = args.empty() ? -1 : args[0].as_int();
        auto i = static_cast<std::size_t>(normalize_index(idx, items.size(), "pop"));
        Value v = items[i];
        items.erase(items.begin() + static_cast<std::ptrdiff_t>(i));
        return v;
      }
      if (name == "insert") {
        expect_args(qual, args, 2, 2);
        auto n = static_cast<std::int64_t>(items.size());
        auto idx = args[0].as_int();
        if (idx < 0) idx = std::max<std::int64_t>(0, idx + n);
        idx = std::min(idx, n);
        items.insert(items.begin() + idx, args[1]);
        return Value();
      }
      if (name == "remove") {
        expect_args(qual, args, 1, 1);
        for (auto it = items.begin(); it != items.end(); ++it) {
          if (py_equal(*it, args[0])) { items.erase(it); return Value(); }
        }
        raise("ValueError", "list.remove(x): x not in list");
      }
      if (name == "index") {
        expect_args(qual, args, 1, 1);
        for (std::size_t i = 0; i < items.size(); ++i) {
          if (py_equal(items[i], args[0])) return Value(static_cast<std::int64_t>(i));
        }
        raise("ValueError", args[0].repr() + " is not in list");
      }
      if (name == "count") {
        expect_args(qual, args, 1, 1);
        return Value(static_cast<std::int64_t>(std::count_if(items.begin(), items.end(), [&](const Value &x) { return py_equal(x, args[0]); })));
      }
      if (name == "sort") {
        expect_args(qual, args, 0, 0);
        Value s = sorted_copy(items, kw, qual);
        items = s.items();
        return Value();
      }
      if (name == "reverse") { std::reverse(items.begin(), items.end()); return Value(); }
      if (name == "copy") return Value::list(items);
      if (name == "clear") { items.clear(); return Value(); }
    }
    if (self.is_tuple()) {
      const auto &items = self.items();
      if (name == "count") {
        expect_args(qual, args, 1, 1);
        return Value(static_cast<std::int64_t>(std::count_if(items.begin(), items.end(), [&](const Value &x) { return py_equal(x, args[0]); })));
      }
      if (name == "index") {
        expect_args(qual, args, 1, 1);
        for (std::size_t i = 0; i < items.size(); ++i) {
          if (py_equal(items[i], args[0])) return Value(static_cast<std::int64_t>(i));
        }
        raise("ValueError", "tuple.index(x): x not in tuple");
      }
    }
    if (self.is_str()) return call_str_method(self.as_str(), name, qual, args, kw);
    if (self.is_dict()) {
      auto &d = self.dict_obj();
      if (name == "get") {
        expect_args(qual, args, 1, 2);
        require_hashable(args[0]);
        const Value *v = d.find(args[0]);
        return v != nullptr ? *v : (args.size() > 1 ? args[1] : Value());
      }
      if (name == "keys") { ValueList out; for (auto &kv : d.items) out.push_back(kv.first); return Value::list(std::move(out)); }
      if (name == "values") { ValueList out; for (auto &kv : d.items) out.push_back(kv.second); return Value::list(std::move(out)); }
      if (name == "items") {
        ValueList out;
        for (auto &kv : d.items) out.push_back(Value::tuple({kv.first, kv.second}));
        return Value::list(std::move(out));
      }
      if (name == "pop") {
        expect_args(qual, args, 1, 2);
        const Value *v = d.find(args[0]);
        if (v == nullptr) {
          if (args.size() > 1) return args[1];
          raise("KeyError", args[0].repr());
        }
        Value out = *v;
        d.erase(args[0]);
        return out;
      }
      if (name == "setdefault") {
        expect_args(qual, args, 1, 2);
        require_hashable(args[0]);
        if (const Value *v = d.find(args[0])) return *v;
        Value dflt = args.size() > 1 ? args[1] : Value();
        d.set(args[0], dflt);
        return dflt;
      }
      if (name == "update") {
        expect_args(qual, args, 1, 1);
        if (!args[0].is_dict()) raise("TypeError", "dict.update expects a dict");
        for (auto &kv : args[0].dict_obj().items) d.set(kv.first, kv.second);
        return Value();
      }
      if (name == "copy") {
        Value c = Value::dict();
        c.dict_obj().items = d.items;
        return c;
      }
      if (name == "clear") { d.items.clear(); return Value(); }
    }
    if (self.is_set()) {
      auto &s = self.set_obj();
      if (name == "add") { expect_args(qual, args, 1, 1); require_hashable(args[0]); s.add(args[0]); return Value(); }
      if (name == "remove" || name == "discard") {
        expect_args(qual, args, 1, 1);
        for (auto it = s.items.begin(); it != s.items.end(); ++it) {
          if (py_equal(*it, args[0])) { s.items.erase(it); return Value(); }
        }
        if (name == "remove") raise("KeyError", args[0].repr());
        return Value();
      }
      if (name == "pop") {
        if (s.items.empty()) raise("KeyError", "'pop from an empty set'");
        Value v = s.items.front();
        s.items.erase(s.items.begin());
        return v;
      }
      if (name == "copy") return Value::set(s.items);
      ValueList other = args.empty() ? ValueList{} : materialize(args[0]);
      Value o = Value::set(other);
      ValueList out;
      if (name == "union") { out = s.items; out.insert(out.end(), other.begin(), other.end()); }
      if (name == "intersection") { for (auto &x : s.items) if (o.set_obj().contains(x)) out.push_back(x); }
      if (name == "difference") { for (auto &x : s.items) if (!o.set_obj().contains(x)) out.push_back(x); }
      return Value::set(std::move(out));
    }
    if (self.is_float() && name == "is_integer") {
      expect_args(qual, args, 0, 0);
      double d = self.as_float();
      return Value(std::isfinite(d) && std::floor(d) == d);
    }
    if (self.is_int() && name == "bit_length") {
      auto v = self.as_int();
      std::uint64_t u = v < 0 ? static_cast<std::uint64_t>(-(v + 1)) + 1 : static_cast<std::uint64_t>(v);
      std::int64_t n = 0;
      while (u) { ++n; u >>= 1; }
      return Value(n);
    }
    raise("AttributeError", "'" + self.type_name() + "' object has no attribute '" + name + "'");
  }

  Value call_str_method(const std::string &s, const std::string &name, const std::string &qual,
                        ValueList &args, Kwargs &kw) {
    reject_kwargs(qual, kw);
    auto str_arg = [&](std::size_t i) -> const std::string & {
      if (!args[i].is_str()) raise("TypeError", "must be str, not " + args[i].type_name());
      return args[i].as_str();
    };
    static const std::string ws = " \t\n\r\f\v";
    auto pred_all = [&](auto pred) {
      if (s.empty()) return Value(false);
      return Value(std::all_of(s.begin(), s.end(), [&](char c) { return pred(static_cast<unsigned char>(c)) != 0; }));
    };
    if (name == "split") {
      expect_args(qual, args, 0, 2);
      ValueList out;
      if (args.empty() || args[0].is_none()) {
        std::size_t i = 0;
        while (i < s.size()) {
          while (i < s.size() && ws.find(s[i]) != std::string::npos) ++i;
          if (i >= s.size()) break;
          std::size_t j = i;
          while (j < s.size() && ws.find(s[j]) == std::string::npos) ++j;
          out.emplace_back(s.substr(i, j - i));
          i = j;
        }
        return Value::list(std::move(out));
      }
      const auto &sep = str_arg(0);
      if (sep.empty()) raise("ValueError", "empty separator");
      std::size_t start = 0;
      while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string::npos) break;
        out.emplace_back(s.substr(start, pos - start));
        start = pos + sep.size();
      }
      out.emplace_back(s.substr(start));
      return Value::list(std::move(out));
    }
    if (name == "join") {
      expect_args(qual, args, 1, 1);
      ValueList parts = materialize(args[0]);
      std::string out;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!parts[i].is_str()) {
          raise("TypeError", "sequence item " + std::to_string(i) + ": expected str instance, " +
                                 parts[i].type_name() + " found");
        }
        if (i) out += s;
        out += parts[i].as_str();
      }
      return Value(std::move(out));
    }
    if (name == "strip" || name == "lstrip" || name == "rstrip") {
      expect_args(qual, args, 0, 1);
      std::string chars = (args.empty() || args[0].is_none()) ? ws : str_arg(0);
      return Value(strip_chars(s, chars, name != "rstrip", name != "lstrip"));
    }
    if (name == "lower" || name == "upper" || name == "swapcase") {
      std::string out = s;
      for (auto &c : out) {
        auto u = static_cast<unsigned char>(c);
        if (name == "lower") c = static_cast<char>(std::tolower(u));
        else if (name == "upper") c = static_cast<char>(std::toupper(u));
        else c = static_cast<char>(std::isupper(u) ? std::tolower(u) : std::toupper(u));
      }
      return Value(std::move(out));
    }
    if (name == "capitalize") {
      std::string out = s;
      for (std::size_t i = 0; i < out.size(); ++i) {
        auto u = static_cast<unsigned char>(out[i]);
        out[i] = static_cast<char>(i == 0 ? std::toupper(u) : std::tolower(u));
      }
      return Value(std::move(out));
    }
    if (name == "title") {
      std::string out = s;
      bool prev_alpha = false;
      for (auto &c : out) {
        auto u = static_cast<unsigned char>(c);
        c = static_cast<char>(prev_alpha ? std::tolower(u) : std::toupper(u));
        prev_alpha = std::isalpha(u) != 0;
      }
      return Value(std::move(out));
    }
    if (name == "replace") {
      expect_args(qual, args, 2, 2);
      const auto &from = str_arg(0);
      const auto &to = str_arg(1);
      if (from.empty()) {
        std::string out = to;
        for (char c : s) { out.push_back(c); out += to; }
        return Value(std::move(out));
      }
      std::string out;
      std::size_t start = 0;
      while (true) {
        auto pos = s.find(from, start);
        if (pos == std::string::npos) break;
        out += s.substr(start, pos - start);
        out += to;
        start = pos + from.size();
      }
      out += s.substr(start);
      check_size(out.size());
      return Value(std::move(out));
    }
    if (name == "startswith" || name == "endswith") {
      expect_args(qual, args, 1, 1);
      const auto &p = str_arg(0);
      if (p.size() > s.size()) return Value(false);
      return Value(name == "startswith" ? s.compare(0, p.size(), p) == 0
                                        : s.compare(s.size() - p.size(), p.size(), p) == 0);
    }
    if (name == "find" || name == "rfind" || name == "index") {
      expect_args(qual, args, 1, 1);
      auto pos = name == "rfind" ? s.rfind(str_arg(0)) : s.find(str_arg(0));
      if (pos == std::string::npos) {
        if (name == "index") raise("ValueError", "substring not found");
        return Value(std::int64_t{-1});
      }
      return Value(static_cast<std::int64_t>(pos));
    }
    if (name == "count") {
      expect_args(qual, args, 1, 1);
      const auto &sub = str_arg(0);
      if (sub.empty()) return Value(static_cast<std::int64_t>(s.size() + 1));
      std::int64_t n = 0;
      for (auto pos = s.find(sub); pos != std::string::npos; pos = s.find(sub, pos + sub.size())) ++n;
      return Value(n);
    }
    if (name == "isdigit" || name == "isnumeric" || name == "isdecimal") return pred_all([](unsigned char c) { return std::isdigit(c); });
    if (name == "isalpha") return pred_all([](unsigned char c) { return std::isalpha(c); });
    if (name == "isalnum") return pred_all([](unsigned char c) { return std::isalnum(c); });
    if (name == "isspace") return pred_all([](unsigned char c) { return std::isspace(c); });
    if (name == "isupper" || name == "islower") {
      bool upper = name == "isupper";
      bool cased = false;
      for (char c : s) {
        auto u = static_cast<unsigned char>(c);
        if (std::isalpha(u)) {
          cased = true;
          if ((upper && std::islower(u)) || (!upper && std::isupper(u))) return Value(false);
        }
      }
      return Value(cased);
    }
    if (name == "zfill" || name == "center" || name == "ljust" || name == "rjust") {
      expect_args(qual, args, 1, 2);
      auto width = static_cast<std::size_t>(std::max<std::int64_t>(0, args[0].as_int()));
      if (s.size() >= width) return Value(s);
      std::size_t pad = width - s.size();
      char fill = (args.size() > 1 && args[1].is_str() && !args[1].as_str().empty()) ? args[1].as_str()[0] : ' ';
      if (name == "zfill") {
        if (!s.empty() && (s[0] == '-' || s[0] == '+')) return Value(s.substr(0, 1) + std::string(pad, '0') + s.substr(1));
        return Value(std::string(pad, '0') + s);
      }
      if (name == "ljust") return Value(s + std::string(pad, fill));
      if (name == "rjust") return Value(std::string(pad, fill) + s);
      std::size_t left = pad / 2 + (pad & width & 1);
      return Value(std::string(left, fill) + s + std::string(pad - left, fill));
    }
    raise("AttributeError", "'str' object has no attribute '" + name + "'");
  }

  // -- modules ------------------------------------------------------------

  Value import_module(const std::string &name) {
    if (std::find(limits_.allowed_imports.begin(), limits_.allowed_imports.end(), name) ==
        limits_.allowed_imports.end()) {
      raise("ImportError", "import of '" + name + "' is not allowed");
    }
    if (name == "math") return math_module();
    raise("ModuleNotFoundError", "No module named '" + name + "'");
  }

  Value math_module() {
    if (!math_.is_none()) return math_;
    auto m = std::make_shared<ModuleObject>();
    m->name = "math";
    auto fn = [&](const std::string &n, std::function<Value(Interpreter &, ValueList &, Kwargs &)> f) {
      auto b = std::make_shared<BuiltinFunction>();
      b->name = n;
      b->fn = std::move(f);
      m->attrs[n] = Value::object(b);
    };
    auto num = [](const Value &v, const std::string &) {
      if (!v.is_number()) raise("TypeError", "must be real number, not " + v.type_name());
      return v.as_float();
    };
    auto unary_math = [&](const std::string &n, double (*f)(double), bool domain_nonneg = false) {
      fn(n, [n, f, num, domain_nonneg](Interpreter &, ValueList &a, Kwargs &) {
        expect_args("math." + n, a, 1, 1);
        double x = num(a[0], n);
        if (domain_nonneg && x < 0) raise("ValueError", "math domain error");
        double r = f(x);
        if (std::isnan(r) && !std::isnan(x)) raise("ValueError", "math domain error");
        if (std::isinf(r) && !std::isinf(x)) raise("OverflowError", "math range error");
        return Value(r);
      });
    };
    unary_math("sqrt", [](double x) { return std::sqrt(x); }, true);
    unary_math("exp", [](double x) { return std::exp(x); });
    unary_math("sin", [](double x) { return std::sin(x); });
    unary_math("cos", [](double x) { return std::cos(x); });
    unary_math("tan", [](double x) { return std::tan(x); });
    unary_math("fabs", [](double x) { return std::fabs(x); });
    unary_math("log2", [](double x) { return x <= 0 ? std::nan("") : std::log2(x); });
    unary_math("log10", [](double x) { return x <= 0 ? std::nan("") : std::log10(x); });
    fn("log", [num](Interpreter &, ValueList &a, Kwargs &) {
      expect_args("math.log", a, 1, 2);
      double x = num(a[0], "log");
      if (x <= 0) raise("ValueError", "math domain error");
      if (a.size() == 2) {
        double b = num(a[1], "log");
        if (b <= 0 || b == 1.0) raise(b == 1.0 ? "ZeroDivisionError" : "ValueError", "math domain error");
        return Value(std::log(x) / std::log(b));
      }
      return Value(std::log(x));
    });
    fn("pow", [num](Interpreter &, ValueList &a, Kwargs &) {
      expect_args("math.pow", a, 2, 2);
      double r = std::pow(num(a[0], "pow"), num(a[1], "pow"));
      if (std::isinf(r)) raise("OverflowError", "math range error");
      if (std::isnan(r)) raise("ValueError", "math domain error");
      return Value(r);
    });
    auto round_fn = [&](const std::string &n, double (*f)(double)) {
      fn(n, [n, f, num](Interpreter &, ValueList &a, Kwargs &) {
        expect_args("math." + n, a, 1, 1);
        if (a[0].is_int() || a[0].is_bool()) return Value(a[0].as_int());
        return Value(float_to_int(f(num(a[0], n))));
      });
    };
    round_fn("floor", [](double x) { return std::floor(x); });
    round_fn("ceil", [](double x) { return std::ceil(x); });
    round_fn("trunc", [](double x) { return std::trunc(x); });
    fn("isqrt", [](Interpreter &, ValueList &a, Kwargs &) {
      expect_args("math.isqrt", a, 1, 1);
      if (!(a[0].is_int() || a[0].is_bool())) raise("TypeError", "'" + a[0].type_name() + "' object cannot be interpreted as an integer");
      auto n = a[0].as_int();
      if (n < 0) raise("ValueError", "isqrt() argument must be nonnegative");
      auto r = static_cast<std::int64_t>(std::sqrt(static_cast<long double>(n)));
      while (r * r > n) --r;
      while ((r + 1) * (r + 1) <= n) ++r;
      return Value(r);
    });
    fn("gcd", [](Interpreter &, ValueList &a, Kwargs &) {
      std::int64_t g = 0;
      for (auto &v : a) {
        if (!(v.is_int() || v.is_bool())) raise("TypeError", "'" + v.type_name() + "' object cannot be interpreted as an integer");
        g = std::gcd(g, v.as_int());
      }
      return Value(g < 0 ? -g : g);
    });
    fn("factorial", [](Interpreter &, ValueList &a, Kwargs &) {
      expect_args("math.factorial", a, 1, 1);
      if (!(a[0].is_int() || a[0].is_bool())) raise("TypeError", "'" + a[0].type_name() + "' object cannot be interpreted as an integer");
      auto n = a[0].as_int();
      if (n < 0) raise("ValueError", "factorial() not defined for negative values");
      std::int64_t r = 1;
      for (std::int64_t i = 2; i <= n; ++i) r = checked_mul(r, i);
      return Value(r);
    });
    fn("isclose", [num](Interpreter &, ValueList &a, Kwargs &kw) {
      expect_args("math.isclose", a, 2, 2);
      double x = num(a[0], "isclose"), y = num(a[1], "isclose");
      double rel = 1e-9, abs_tol = 0.0;
      if (const Value *v = kwarg(kw, "rel_tol")) rel = v->as_float();
      if (const Value *v = kwarg(kw, "abs_tol")) abs_tol = v->as_float();
      return Value(x == y || std::fabs(x - y) <= std::max(rel * std::max(std::fabs(x), std::fabs(y)), abs_tol));
    });
    m->attrs["pi"] = Value(3.141592653589793);
    m->attrs["e"] = Value(2.718281828459045);
    m->attrs["inf"] = Value(std::numeric_limits<double>::infinity());
    math_ = Value::object(m);
    return math_;
  }

  // -- builtins -----------------------------------------------------------

  void def_builtin(const std::string &name, std::function<Value(Interpreter &, ValueList &, Kwargs &)> f) {
    auto b = std::make_shared<BuiltinFunction>();
    b->name = name;
    b->fn = std::move(f);
    builtins_[name] = Value::object(b);
  }

  static Value to_int_value(const Value &v) {
    switch (v.kind()) {
      case Value::Kind::Bool:
      case Value::Kind::Int: return Value(v.as_int());
      case Value::Kind::Float: return Value(float_to_int(v.as_float()));
      case Value::Kind::Str: {
        std::string s = strip_chars(v.as_str(), " \t\n\r", true, true);
        std::string digits;
        for (char c : s) {
          if (c != '_') digits.push_back(c);
        }
        std::size_t i = (!digits.empty() && (digits[0] == '-' || digits[0] == '+')) ? 1 : 0;
        bool ok = i < digits.size() &&
                  std::all_of(digits.begin() + static_cast<std::ptrdiff_t>(i), digits.end(),
                              [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
        if (!ok) raise("ValueError", "invalid literal for int() with base 10: " + v.repr());
        errno = 0;
        long long r = std::strtoll(digits.c_str(), nullptr, 10);
        if (errno == ERANGE) raise("OverflowError", "integer result exceeds 64 bits");
        return Value(static_cast<std::int64_t>(r));
      }
      default:
        raise("TypeError", "int() argument must be a string, a bytes-like object or a real number, not '" +
                               v.type_name() + "'");
    }
  }

  static Value to_float_value(const Value &v) {
    if (v.is_number()) return Value(v.as_float());
    if (v.is_str()) {
      std::string s = strip_chars(v.as_str(), " \t\n\r", true, true);
      std::string lower = s;
      for (auto &c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (lower == "inf" || lower == "+inf" || lower == "infinity") return Value(std::numeric_limits<double>::infinity());
      if (lower == "-inf" || lower == "-infinity") return Value(-std::numeric_limits<double>::infinity());
      if (lower == "nan") return Value(std::numeric_limits<double>::quiet_NaN());
      char *end = nullptr;
      double d = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) {
        raise("ValueError", "could not convert string to float: " + v.repr());
      }
      return Value(d);
    }
    raise("TypeError", "float() argument must be a string or a real number, not '" + v.type_name() + "'");
  }

  Value min_max(ValueList &a, Kwargs &kw, bool is_max) {
    const std::string fname = is_max ? "max" : "min";
    reject_kwargs(fname, kw, {"key", "default"});
    if (a.empty()) raise("TypeError", fname + " expected at least 1 argument, got 0");
    ValueList items = a.size() == 1 ? materialize(a[0]) : a;
    if (items.empty()) {
      if (const Value *d = kwarg(kw, "default")) return *d;
      raise("ValueError", fname + "() arg is an empty sequence");
    }
    const Value *key = kwarg(kw, "key");
    auto keyed = [&](const Value &x) {
      if (key == nullptr || key->is_none()) return x;
      ValueList args{x};
      Kwargs none;
      return call(*key, args, none);
    };
    Value best = items[0];
    Value best_key = keyed(best);
    for (std::size_t i = 1; i < items.size(); ++i) {
      Value k = keyed(items[i]);
      int c = compare_values(k, best_key, is_max ? ">" : "<");
      if (is_max ? c > 0 : c < 0) {
        best = items[i];
        best_key = k;
      }
    }
    return best;
  }

  void install_builtins() {
    def_builtin("len", [](Interpreter &in, ValueList &a, Kwargs &kw) {
      reject_kwargs("len", kw);
      expect_args("len", a, 1, 1);
      const Value &v = a[0];
      switch (v.kind()) {
        case Value::Kind::Str: return Value(static_cast<std::int64_t>(v.as_str().size()));
        case Value::Kind::List:
        case Value::Kind::Tuple: return Value(static_cast<std::int64_t>(v.items().size()));
        case Value::Kind::Dict: return Value(static_cast<std::int64_t>(v.dict_obj().items.size()));
        case Value::Kind::Set: return Value(static_cast<std::int64_t>(v.set_obj().items.size()));
        default: break;
      }
      if (auto *r = as_object<RangeObject>(v)) return Value(r->size());
      (void)in;
      raise("TypeError", "object of type '" + v.type_name() + "' has no len()");
    });
    def_builtin("range", [](Interpreter &, ValueList &a, Kwargs &kw) {
      reject_kwargs("range", kw);
      if (a.empty() || a.size() > 3) raise("TypeError", "range expected 1 to 3 arguments, got " + std::to_string(a.size()));
      for (auto &v : a) {
        if (!(v.is_int() || v.is_bool())) {
          raise("TypeError", "'" + v.type_name() + "' object cannot be interpreted as an integer");
        }
      }
      auto r = std::make_shared<RangeObject>();
      if (a.size() == 1) {
        r->stop = a[0].as_int();
      } else {
        r->start = a[0].as_int();
        r->stop = a[1].as_int();
        if (a.size() == 3) r->step = a[2].as_int();
      }
      if (r->step == 0) raise("ValueError", "range() arg 3 must not be zero");
      return Value::object(r);
    });
    def_builtin("sum", [](Interpreter &in, ValueList &a, Kwargs &kw) {
      reject_kwargs("sum", kw, {"start"});
      expect_args("sum", a, 1, 2);
      Value acc = a.size() > 1 ? a[1] : (kwarg(kw, "start") ? *kwarg(kw, "start") : Value(std::int64_t{0}));
      for (auto &x : in.materialize(a[0])) {
        if (acc.is_str()) raise("TypeError", "sum() can't sum strings [use ''.join(seq) instead]");
        acc = in.binop(BinOpKind::Add, acc, x, false);
      }
      return acc;
    });
    def_builtin("abs", [](Interpreter &, ValueList &a, Kwargs &) {
      expect_args("abs", a, 1, 1);
      if (a[0].is_float()) return Value(std::fabs(a[0].as_float()));
      if (a[0].is_int() || a[0].is_bool()) {
        auto v = a[0].as_int();
        return Value(v < 0 ? checked_sub(0, v) : v);
      }
      raise("TypeError", "bad operand type for abs(): '" + a[0].type_name() + "'");
    });
    def_builtin("min", [](Interpreter &in, ValueList &a, Kwargs &kw) { return in.min_max(a, kw, false); });
    def_builtin("max", [](Interpreter &in, ValueList &a, Kwargs &kw) { return in.min_max(a, kw, true); });
    def_builtin("int", [](Interpreter &, ValueList &a, Kwargs &) {
      if (a.empty()) return Value(std::int64_t{0});
      expect_args("int", a, 1, 1);
      return to_int_value(a[0]);
    });
    def_builtin("float", [](Interpreter &, ValueList &a, Kwargs &) {
      if (a.empty()) return Value(0.0);
      expect_args("float", a, 1, 1);
      return to_float_value(a[0]);
    });
    def_builtin("str", [](Interpreter &, ValueList &a, Kwargs &) {
      if (a.empty()) return Value(std::string());
      expect_args("str", a, 1, 1);
      return Value(a[0].str());
    });
    def_builtin("repr", [](Interpreter &, ValueList &a, Kwargs &) {
      expect_args("repr", a, 1, 1);
      return Value(a[0].repr());
    });
    def_builtin("bool", [](Interpreter &, ValueList &a, Kwargs &) {
      if (a.empty()) return Value(false);
      expect_args("bool", a, 1, 1);
      return Value(a[0].truthy());
    });
    def_builtin("list", [](Interpreter &in, ValueList &a, Kwargs &) {
      if (a.empty()) return Value::list();
      expect_args("list", a, 1, 1);
      return Value::list(in.materialize(a[0]));
    });
    def_builtin("tuple", [](Interpreter &in, ValueList &a, Kwargs &) {
      if (a.empty()) return Value::tuple();
      expect_args("tuple", a, 1, 1);
      return Value::tuple(in.materialize(a[0]));
    });
    def_builtin("set", [](Interpreter &in, ValueList &a, Kwargs &) {
      if (a.empty()) return Value::set();
      expect_args("set", a, 1, 1);
      auto items = in.materialize(a[0]);
      for (auto &x : items) require_hashable(x);
      return Value::set(std::move(items));
    });
    def_builtin("dict", [](Interpreter &in, ValueList &a, Kwargs &kw) {
      Value d = Value::dict();
      if (!a.empty()) {
        expect_args("dict", a, 1, 1);
        if (a[0].is_dict()) {
          d.dict_obj().items = a[0].dict_obj().items;
        } else {
          for (auto &pair : in.materialize(a[0])) {
            auto kv = in.materialize(pair);
            if (kv.size() != 2) raise("ValueError", "dictionary update sequence element has wrong length");
            require_hashable(kv[0]);
            d.dict_obj().set(kv[0], kv[1]);
          }
        }
      }
      for (auto &[k, v] : kw) d.dict_obj().set(Value(k), v);
      return d;
    });
    def_builtin("sorted", [](Interpreter &in, ValueList &a, Kwargs &kw) {
      expect_args("sorted", a, 1, 1);
      return in.sorted_copy(in.materialize(a[0]), kw, "sorted");
    });
    def_builtin("reversed", [](Interpreter &in, ValueList &a, Kwargs &) {
      expect_args("reversed", a, 1, 1);
      if (a[0].is_dict() || a[0].is_set()) raise("TypeError", "'" + a[0].type_name() + "' object is not reversible");
      auto items = in.materialize(a[0]);
      std::reverse(items.begin(), items.end());
      return Value::list(std::move(items));
    });
    def_builtin("enumerate", [](Interpreter &in, ValueList &a, Kwargs &kw) {
      expect_args("enumerate", a, 1, 2);
      std::int64_t start = a.size() > 1 ? a[1].as_int() : (kwarg(kw, "start") ? kwarg(kw, "start")->as_int() : 0);
      ValueList out;
      for (auto &x : in.materialize(a[0])) out.push_back(Value::tuple({Value(start++), x}));
      return Value::list(std::move(out));
    });
    def_builtin("zip", [](Interpreter &in, ValueList &a, Kwargs &) {
      std::vector<ValueList> cols;
      for (auto &x : a) cols.push_back(in.materialize(x));
      ValueList out;
      if (cols.empty()) return Value::list();
      std::size_t n = cols[0].size();
      for (auto &c : cols) n = std::min(n, c.size());
      for (std::size_t i = 0; i < n; ++i) {
        ValueList row;
        for (auto &c : cols) row.push_back(c[i]);
        out.push_back(Value::tuple(std::move(row)));
      }
      return Value::list(std::move(out));
    });
    def_builtin("map", [](Interpreter &in, ValueList &a, Kwargs &) {
      if (a.size() < 2) raise("TypeError", "map() must have at least two arguments.");
      std::vector<ValueList> cols;
      for (std::size_t i = 1; i < a.size(); ++i) cols.push_back(in.materialize(a[i]));
      std::size_t n = cols[0].size();
      for (auto &c : cols) n = std::min(n, c.size());
      ValueList out;
      for (std::size_t i = 0; i < n; ++i) {
        ValueList args;
        for (auto &c : cols) args.push_back(c[i]);
        Kwargs none;
        out.push_back(in.call(a[0], args, none));
      }
      return Value::list(std::move(out));
    });
    def_builtin("filter", [](Interpreter &in, ValueList &a, Kwargs &) {
      expect_args("filter", a, 2, 2);
      ValueList out;
      for (auto &x : in.materialize(a[1])) {
        bool keep;
        if (a[0].is_none()) {
          keep = x.truthy();
        } else {
          ValueList args{x};
          Kwargs none;
          keep = in.call(a[0], args, none).truthy();
        }
        if (keep) out.push_back(x);
      }
      return Value::list(std::move(out));
    });
    def_builtin("any", [](Interpreter &in, ValueList &a, Kwargs &) {
      expect_args("any", a, 1, 1);
      auto items = in.materialize(a[0]);
      return Value(std::any_of(items.begin(), items.end(), [](const Value &v) { return v.truthy(); }));
    });
    def_builtin("all", [](Interpreter &in, ValueList &a, Kwargs &) {
      expect_args("all", a, 1, 1);
      auto items = in.materialize(a[0]);
      return Value(std::all_of(items.begin(), items.end(), [](const Value &v) { return v.truthy(); }));
    });
    def_builtin("round", [](Interpreter &, ValueList &a, Kwargs &kw) {
      expect_args("round", a, 1, 2);
      const Value *nd = a.size() > 1 ? &a[1] : kwarg(kw, "ndigits");
      if (!a[0].is_number()) raise("TypeError", "type " + a[0].type_name() + " doesn't define __round__ method");
      if (a[0].is_int() || a[0].is_bool()) return Value(a[0].as_int());
      double x = a[0].as_float();
      if (nd == nullptr || nd->is_none()) {
        double r = std::nearbyint(x);  // banker's rounding under the default FE mode
        return Value(float_to_int(r));
      }
      double scale = std::pow(10.0, static_cast<double>(nd->as_int()));
      double y = x * scale;
      double r = std::nearbyint(y);
      if (std::fabs(y - std::trunc(y)) != 0.5) r = std::round(y);
      return Value(r / scale);
    });
    def_builtin("pow", [](Interpreter &in, ValueList &a, Kwargs &) {
      expect_args("pow", a, 2, 3);
      if (a.size() == 3) {
        auto b = a[0].as_int(), e = a[1].as_int(), m = a[2].as_int();
        if (m == 0) raise("ValueError", "pow() 3rd argument cannot be 0");
        __int128 r = 1, base = floor_mod(b, m);
        while (e > 0) {
          if (e & 1) r = (r * base) % m;
          base = (base * base) % m;
          e >>= 1;
        }
        return Value(floor_mod(static_cast<std::int64_t>(r), m));
      }
      return in.binop(BinOpKind::Pow, a[0], a[1], false);
    });
    def_builtin("divmod", [](Interpreter &in, ValueList &a, Kwargs &) {
      expect_args("divmod", a, 2, 2);
      Value q = in.binop(BinOpKind::FloorDiv, a[0], a[1], false);
      Value r = in.binop(BinOpKind::Mod, a[0], a[1], false);
      return Value::tuple({q, r});
    });
    def_builtin("isinstance", [](Interpreter &in, ValueList &a, Kwargs &) {
      expect_args("isinstance", a, 2, 2);
      auto matches = [&](const Value &t) {
        auto *to = as_object<TypeObject>(t);
        if (to == nullptr) raise("TypeError", "isinstance() arg 2 must be a type or tuple of types");
        const std::string tn = a[0].type_name();
        return tn == to->name || (to->name == "int" && tn == "bool");
      };
      if (a[1].is_tuple()) {
        return Value(std::any_of(a[1].items().begin(), a[1].items().end(), matches));
      }
      (void)in;
      return Value(matches(a[1]));
    });
    def_builtin("print", [](Interpreter &in, ValueList &a, Kwargs &kw) {
      std::string sep = " ", end = "\n";
      if (const Value *s = kwarg(kw, "sep")) sep = s->str();
      if (const Value *e = kwarg(kw, "end")) end = e->str();
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (i) in.output += sep;
        in.output += a[i].str();
      }
      in.output += end;
      if (in.output.size() > 1'000'000) in.output.erase(0, in.output.size() - 1'000'000);
      return Value();
    });
    def_builtin("chr", [](Interpreter &, ValueList &a, Kwargs &) {
      expect_args("chr", a, 1, 1);
      auto c = a[0].as_int();
      if (c < 0 || c > 0x10ffff) raise("ValueError", "chr() arg not in range(0x110000)");
      if (c > 127) raise("ValueError", "non-ASCII characters are not supported");
      return Value(std::string(1, static_cast<char>(c)));
    });
    def_builtin("ord", [](Interpreter &, ValueList &a, Kwargs &) {
      expect_args("ord", a, 1, 1);
      if (!a[0].is_str() || a[0].as_str().size() != 1) {
        raise("TypeError", "ord() expected a character");
      }
      return Value(static_cast<std::int64_t>(static_cast<unsigned char>(a[0].as_str()[0])));
    });
    def_builtin("open", [](Interpreter &, ValueList &, Kwargs &) -> Value {
      raise("PermissionError", "file access is not permitted");
    });
    def_builtin("input", [](Interpreter &, ValueList &, Kwargs &) -> Value {
      raise("EOFError", "EOF when reading a line");
    });
    for (const char *t : {"int", "float", "str", "bool", "list", "tuple", "dict", "set"}) {
      constructors_[t] = builtins_.at(t);
      auto to = std::make_shared<TypeObject>();
      to->name = t;
      builtins_[t] = Value::object(to);
    }
    for (const char *e :
         {"Exception", "ValueError", "TypeError", "IndexError", "KeyError", "ZeroDivisionError",
          "RuntimeError", "OverflowError", "AssertionError", "AttributeError", "NameError",
          "RecursionError", "NotImplementedError", "ArithmeticError", "LookupError"}) {
      auto cls = std::make_shared<ExceptionClass>();
      cls->name = e;
      builtins_[e] = Value::object(cls);
    }
  }

 private:
  const ExecLimits &limits_;
  std::unordered_set<std::string> trace_;
  std::chrono::steady_clock::time_point deadline_;
  std::uint64_t steps_ = 0;
  int depth_ = 0;
  std::shared_ptr<const py::Module> module_;
  FramePtr globals_;
  std::unordered_map<std::string, Value> builtins_;
  std::unordered_map<std::string, Value> constructors_;
  std::vector<std::weak_ptr<Frame>> live_frames_;
  Value math_;
};

struct RunArgs {
  std::string_view source;
  std::string_view entry;
  const ValueList *args;
  const ExecLimits *limits;
  const std::vector<std::string> *trace;
  ExecOutcome outcome;
};

void run_inline(RunArgs &r) {
  ExecOutcome &out = r.outcome;
  std::shared_ptr<const py::Module> module;
  try {
    module = py::parse_module(r.source);
  } catch (const py::ParseError &e) {
    out.status = ExecOutcome::Status::CompileError;
    out.exception_type = e.diagnostic().exception_class();
    out.message = e.diagnostic().to_string();
    return;
  }
  Interpreter interp(*r.limits, *r.trace);
  try {
    interp.run_module(module);
    out.value = interp.call_entry(r.entry, *r.args);
    out.status = ExecOutcome::Status::Ok;
  } catch (const PyError &e) {
    out.status = ExecOutcome::Status::Exception;
    out.exception_type = e.type;
    out.message = e.message;
  } catch (const TimeoutSignal &) {
    out.status = ExecOutcome::Status::Timeout;
    out.message = "execution exceeded " + std::to_string(r.limits->timeout.count()) + " ms";
  } catch (const std::bad_alloc &) {
    out.status = ExecOutcome::Status::Exception;
    out.exception_type = "MemoryError";
  }
  out.traces = std::move(interp.traces);
  out.output = std::move(interp.output);
}

void *run_thread(void *p) {
  run_inline(*static_cast<RunArgs *>(p));
  return nullptr;
}

}  // namespace

ExecOutcome execute_python(std::string_view source, std::string_view entry_point,
                           const ValueList &args, const ExecLimits &limits,
                           const std::vector<std::string> &trace_functions) {
  RunArgs r{source, entry_point, &args, &limits, &trace_functions, {}};
  // Deep Python recursion maps onto deep C++ recursion; give it a roomy stack.
  pthread_attr_t attr;
  pthread_attr_init(&attr);
  pthread_attr_setstacksize(&attr, std::size_t{256} << 20);
  pthread_t tid;
  if (pthread_create(&tid, &attr, run_thread, &r) != 0) {
    pthread_attr_destroy(&attr);
    run_inline(r);
    return std::move(r.outcome);
  }
  pthread_attr_destroy(&attr);
  pthread_join(tid, nullptr);
  return std::move(r.outcome);
}

}  // namespace callforge
