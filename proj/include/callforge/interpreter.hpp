#pragma once

// Tree-walking interpreter for the supported Python subset. It is the
// in-process reference execution backend: deterministic, isolated per call,
// and reporting the same exception class names CPython would for the
// supported constructs.

#include <chrono>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "callforge/value.hpp"

namespace callforge {

struct ExecLimits {
  std::chrono::milliseconds timeout{10'000};
  int max_recursion_depth{1000};
  std::vector<std::string> allowed_imports{"math"};
  std::size_t max_container_size{5'000'000};
};

struct ExecOutcome {
  enum class Status { Ok, Exception, Timeout, CompileError };

  Status status{Status::Ok};
  Value value;
  std::string exception_type;
  std::string message;
  std::map<std::string, std::string> traces;  // function -> repr of its last return
  std::string output;                         // text written by print()
};

/// Runs `entry_point(*args)` after executing the module's top level in a
/// fresh namespace. Integers are 64-bit; results that would exceed that range
/// raise OverflowError.
ExecOutcome execute_python(std::string_view source, std::string_view entry_point,
                           const ValueList &args, const ExecLimits &limits = {},
                           const std::vector<std::string> &trace_functions = {});

}  // namespace callforge
