#include "callforge/problem_bank.hpp"

#include <set>

#include "callforge/pylang.hpp"

namespace callforge {

std::string TypeSignature::to_string() const {
  std::string s = "(";
  for (std::size_t i = 0; i < input_types.size(); ++i) {
    if (i) s += ", ";
    s += callforge::to_string(input_types[i]);
  }
  s += ") -> ";
  s += callforge::to_string(output_type);
  return s;
}

const UnitProblem *ProblemBank::find(std::string_view id) const {
  for (const auto &p : problems) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

namespace {

std::string required_string(const Json &r, const char *field) {
  if (!r.contains(field)) throw std::invalid_argument(std::string("missing field '") + field + "'");
  if (!r[field].is_string()) throw std::invalid_argument(std::string("field '") + field + "' must be a string");
  std::string v = r[field].get<std::string>();
  if (trim(v).empty()) throw std::invalid_argument(std::string("field '") + field + "' is empty");
  return v;
}

Value json_literal(const Json &j) {
  try {
    return from_json(nlohmann::json::parse(j.dump()));
  } catch (const std::exception &e) {
    throw std::invalid_argument(std::string("unsupported literal: ") + e.what());
  }
}

Json signature_to_json(const TypeSignature &s) {
  Json in = Json::array();
  for (auto t : s.input_types) in.push_back(std::string(to_string(t)));
  return Json{{"inputs", in}, {"output", std::string(to_string(s.output_type))}};
}

TypeSignature signature_from_json(const Json &j) {
  TypeSignature s;
  if (!j.is_object() || !j.contains("inputs") || !j["inputs"].is_array() || !j.contains("output")) {
    throw std::invalid_argument("signature must have inputs and output");
  }
  for (const auto &t : j["inputs"]) {
    auto tag = t.is_string() ? parse_type_tag(t.get<std::string>()) : std::nullopt;
    if (!tag) throw std::invalid_argument("unknown type tag " + t.dump());
    s.input_types.push_back(*tag);
  }
  auto out = j["output"].is_string() ? parse_type_tag(j["output"].get<std::string>()) : std::nullopt;
  if (!out) throw std::invalid_argument("unknown type tag " + j["output"].dump());
  s.output_type = *out;
  if (s.input_types.empty()) throw std::invalid_argument("signature needs at least one input");
  return s;
}

}  // namespace

UnitProblem parse_problem_record(const Json &r) {
  if (!r.is_object()) throw std::invalid_argument("record must be an object");
  UnitProblem p;
  p.id = required_string(r, "id");
  p.prompt = required_string(r, "prompt");
  p.solution_source = required_string(r, "solution");
  p.entry_point = required_string(r, "entry_point");
  if (!r.contains("examples") || !r["examples"].is_array() || r["examples"].empty()) {
    throw std::invalid_argument("field 'examples' must be a non-empty array");
  }
  for (const auto &ex : r["examples"]) {
    if (!ex.is_object() || !ex.contains("args") || !ex["args"].is_array() || !ex.contains("out")) {
      throw std::invalid_argument("each example needs 'args' (array) and 'out'");
    }
    Example e;
    for (const auto &a : ex["args"]) e.args.push_back(json_literal(a));
    e.out = json_literal(ex["out"]);
    p.examples.push_back(std::move(e));
  }
  if (p.examples.front().args.empty()) throw std::invalid_argument("examples must pass at least one argument");
  for (const auto &e : p.examples) {
    if (e.args.size() != p.arity()) throw std::invalid_argument("examples disagree on argument count");
  }
  std::shared_ptr<const py::Module> module;
  try {
    module = py::parse_module(p.solution_source);
  } catch (const py::ParseError &e) {
    throw std::invalid_argument("solution does not parse: " + e.diagnostic().to_string());
  }
  const py::Stmt *def = module->find_function(p.entry_point);
  if (def == nullptr) throw std::invalid_argument("entry_point '" + p.entry_point + "' is not defined in solution");
  std::size_t required = 0;
  for (const auto &param : def->params) required += param.default_value ? 0 : 1;
  if (p.arity() < required || p.arity() > def->params.size()) {
    throw std::invalid_argument("examples pass " + std::to_string(p.arity()) + " arguments but '" +
                                p.entry_point + "' takes " + std::to_string(def->params.size()));
  }

  // Fields added by later stages.
  if (r.contains("signature") && !r["signature"].is_null()) p.signature = signature_from_json(r["signature"]);
  if (r.contains("nu") && !r["nu"].is_null()) {
    if (!r["nu"].is_number_integer() || r["nu"].get<int>() < 1) throw std::invalid_argument("nu must be a positive integer");
    p.nu = r["nu"].get<int>();
  }
  if (r.contains("unit") && !r["unit"].is_null()) {
    if (!r["unit"].is_number_integer() || r["unit"].get<int>() < 1) throw std::invalid_argument("unit must be a positive integer");
    p.unit = UnitId{r["unit"].get<int>()};
  }
  if (r.contains("eligible")) p.eligible = r["eligible"].is_boolean() && r["eligible"].get<bool>();
  if (r.contains("ineligible_reason") && r["ineligible_reason"].is_string()) {
    p.ineligible_reason = r["ineligible_reason"].get<std::string>();
  }
  if (p.eligible && !p.signature) throw std::invalid_argument("eligible record lacks a signature");
  return p;
}

Json problem_to_json(const UnitProblem &p) {
  Json examples = Json::array();
  for (const auto &e : p.examples) {
    Json args = Json::array();
    for (const auto &a : e.args) args.push_back(Json::parse(to_json(a).dump()));
    examples.push_back(Json{{"args", args}, {"out", Json::parse(to_json(e.out).dump())}});
  }
  Json j = {{"id", p.id},
            {"prompt", p.prompt},
            {"solution", p.solution_source},
            {"entry_point", p.entry_point},
            {"examples", examples}};
  if (p.signature) j["signature"] = signature_to_json(*p.signature);
  if (p.nu) j["nu"] = *p.nu;
  if (p.unit) j["unit"] = p.unit->index;
  if (p.signature || !p.ineligible_reason.empty()) {
    j["eligible"] = p.eligible;
    if (!p.eligible) j["ineligible_reason"] = p.ineligible_reason;
  }
  return j;
}

Json rejection_to_json(const Rejection &r) {
  Json j = {{"line", r.line}, {"reason", r.reason}};
  if (!r.id.empty()) j["id"] = r.id;
  return j;
}

IngestResult ingest_bank_text(std::string_view text, std::string source_label) {
  IngestResult result;
  result.bank.source_label = std::move(source_label);
  std::set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (trim(line).empty()) continue;
    Rejection rej;
    rej.line = line_no;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error &e) {
      rej.reason = std::string("malformed JSON: ") + e.what();
      result.rejections.push_back(rej);
      continue;
    }
    if (record.is_object() && record.contains("id") && record["id"].is_string()) {
      rej.id = record["id"].get<std::string>();
    }
    try {
      UnitProblem p = parse_problem_record(record);
      if (!seen.insert(p.id).second) {
        rej.reason = "duplicate id '" + p.id + "'";
        result.rejections.push_back(rej);
        continue;
      }
      result.bank.problems.push_back(std::move(p));
    } catch (const std::invalid_argument &e) {
      rej.reason = e.what();
      result.rejections.push_back(rej);
    }
  }
  return result;
}

IngestResult ingest_bank(const std::filesystem::path &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError &e) {
    throw BankError(e.what());
  }
  return ingest_bank_text(text, path.filename().string());
}

void write_bank(const std::filesystem::path &path, const ProblemBank &bank) {
  std::vector<Json> records;
  records.reserve(bank.problems.size());
  for (const auto &p : bank.problems) records.push_back(problem_to_json(p));
  write_jsonl(path, records);
}

namespace {

// Folds one observation into the running tag; an empty list matches any list tag.
bool unify(std::optional<TypeObservation> &acc, const TypeObservation &obs) {
  if (!acc) {
    acc = obs;
    return true;
  }
  if (acc->status == TypeObservation::Status::EmptyList) {
    if (obs.status == TypeObservation::Status::EmptyList) return true;
    auto t = obs.tag;
    bool list_tag = t == TypeTag::ListInt || t == TypeTag::ListFloat || t == TypeTag::ListStr || t == TypeTag::ListBool;
    if (!list_tag) return false;
    acc = obs;
    return true;
  }
  if (obs.status == TypeObservation::Status::EmptyList) {
    auto t = acc->tag;
    return t == TypeTag::ListInt || t == TypeTag::ListFloat || t == TypeTag::ListStr || t == TypeTag::ListBool;
  }
  return acc->tag == obs.tag;
}

std::string describe(const std::optional<TypeObservation> &o) {
  if (!o) return "?";
  if (o->status == TypeObservation::Status::EmptyList) return "list[?]";
  return std::string(to_string(o->tag));
}

}  // namespace

SignatureResult infer_signature(const UnitProblem &problem, ExecutionService &sandbox, double timeout_s) {
  SignatureResult res;
  std::vector<ExecRequest> reqs;
  for (std::size_t i = 0; i < problem.examples.size(); ++i) {
    ExecRequest req;
    req.id = problem.id + "#" + std::to_string(i);
    req.source = problem.solution_source;
    req.entry_point = problem.entry_point;
    req.call_args = problem.examples[i].args;
    req.timeout_s = timeout_s;
    reqs.push_back(std::move(req));
  }
  std::vector<ExecResponse> resps;
  try {
    resps = sandbox.run_batch(reqs);
  } catch (const SandboxUnavailable &e) {
    res.status = SignatureResult::Status::SandboxFailure;
    res.error = e.what();
    return res;
  }

  std::vector<std::optional<TypeObservation>> ins(problem.arity());
  std::optional<TypeObservation> out;
  auto unsupported = [&](const TypeObservation &o, const std::string &where) {
    res.status = SignatureResult::Status::Unsupported;
    res.error = "unsupported type " + o.detail + " in " + where;
  };
  for (std::size_t i = 0; i < resps.size(); ++i) {
    const auto &r = resps[i];
    if (r.status != ExecResponse::Status::Ok) {
      res.status = SignatureResult::Status::ExecutionFailed;
      res.error = "example " + std::to_string(i) + ": " + std::string(to_string(r.status)) +
                  (r.exception_type.empty() ? "" : " " + r.exception_type);
      return res;
    }
    Value got = parse_literal(r.value_repr);
    // Bank literals are JSON, so a returned tuple is recorded as an array.
    if (!py_equal(got, problem.examples[i].out) && to_json(got) != to_json(problem.examples[i].out)) {
      res.status = SignatureResult::Status::OutputMismatch;
      res.error = "example " + std::to_string(i) + ": returned " + r.value_repr + ", expected " +
                  problem.examples[i].out.repr();
      return res;
    }
    for (std::size_t a = 0; a < ins.size(); ++a) {
      auto o = observe_type(problem.examples[i].args[a]);
      if (o.status == TypeObservation::Status::Unsupported) {
        unsupported(o, "argument " + std::to_string(a));
        return res;
      }
      if (!unify(ins[a], o)) {
        res.status = SignatureResult::Status::Disagreement;
        res.error = "argument " + std::to_string(a) + " is " + describe(ins[a]) + " in one example and " +
                    describe(o) + " in another";
        return res;
      }
    }
    auto o = observe_type(got);
    if (o.status == TypeObservation::Status::Unsupported) {
      unsupported(o, "return value");
      return res;
    }
    if (!unify(out, o)) {
      res.status = SignatureResult::Status::Disagreement;
      res.error = "return value is " + describe(out) + " in one example and " + describe(o) + " in another";
      return res;
    }
  }
  TypeSignature sig;
  auto settle = [&](const std::optional<TypeObservation> &o, const std::string &where) {
    if (o->status == TypeObservation::Status::EmptyList) {
      res.status = SignatureResult::Status::Unsupported;
      res.error = where + " is only ever an empty list, element type unknown";
      return false;
    }
    return true;
  };
  for (std::size_t a = 0; a < ins.size(); ++a) {
    if (!settle(ins[a], "argument " + std::to_string(a))) return res;
    sig.input_types.push_back(ins[a]->tag);
  }
  if (!settle(out, "return value")) return res;
  sig.output_type = out->tag;
  res.signature = sig;
  return res;
}

void infer_signatures(ProblemBank &bank, ExecutionService &sandbox, double timeout_s) {
  std::vector<SignatureResult> results(bank.problems.size());
  parallel_for(bank.problems.size(), sandbox.concurrency(),
               [&](std::size_t i) { results[i] = infer_signature(bank.problems[i], sandbox, timeout_s); });
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto &p = bank.problems[i];
    if (results[i].status == SignatureResult::Status::SandboxFailure) {
      throw SandboxUnavailable("signature inference for '" + p.id + "': " + results[i].error);
    }
    p.signature = results[i].signature;
    p.eligible = results[i].ok();
    p.ineligible_reason = results[i].ok() ? "" : results[i].error;
  }
}

void classify_bank(ProblemBank &bank, const UnitThresholds &thresholds) {
  for (auto &p : bank.problems) {
    try {
      int nu = analyze_complexity(p.solution_source, p.entry_point);
      p.nu = nu;
      p.unit = classify_unit(nu, thresholds);
    } catch (const py::ParseError &e) {
      p.nu.reset();
      p.unit.reset();
      p.eligible = false;
      p.ineligible_reason = "cannot analyze: " + e.diagnostic().to_string();
    }
  }
}

}  // namespace callforge
