#include "callforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "callforge/pylang.hpp"

namespace callforge {

std::string_view to_string(AbilityCategory c) {
  switch (c) {
    case AbilityCategory::ProblemUnderstanding: return "ProblemUnderstanding";
    case AbilityCategory::CodePatternGeneration: return "CodePatternGeneration";
    case AbilityCategory::ContextManagement: return "ContextManagement";
    case AbilityCategory::Other: return "Other";
  }
  return "Other";
}

std::optional<AbilityCategory> parse_ability(std::string_view s) {
  for (auto c : {AbilityCategory::ProblemUnderstanding, AbilityCategory::CodePatternGeneration,
                 AbilityCategory::ContextManagement, AbilityCategory::Other}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

const std::vector<std::pair<std::string, AbilityCategory>> &error_taxonomy() {
  static const std::vector<std::pair<std::string, AbilityCategory>> table = {
      {"AssertionError", AbilityCategory::ProblemUnderstanding},
      {"ValueError", AbilityCategory::ProblemUnderstanding},
      {"RecursionError", AbilityCategory::ProblemUnderstanding},
      {"ZeroDivisionError", AbilityCategory::ProblemUnderstanding},
      {"SyntaxError", AbilityCategory::CodePatternGeneration},
      {"IndentationError", AbilityCategory::CodePatternGeneration},
      {"NameError", AbilityCategory::ContextManagement},
      {"AttributeError", AbilityCategory::ContextManagement},
      {"TypeError", AbilityCategory::ContextManagement},
      {"IndexError", AbilityCategory::ContextManagement},
      {"UnboundLocalError", AbilityCategory::ContextManagement},
      {"OverflowError", AbilityCategory::Other},
      {"RuntimeError", AbilityCategory::Other},
  };
  return table;
}

AbilityCategory classify_error(std::string_view exception_class) {
  for (const auto &[name, cat] : error_taxonomy()) {
    if (name == exception_class) return cat;
  }
  return AbilityCategory::Other;
}

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n || k < 1 || k > n) {
    throw std::invalid_argument("pass_at_k needs 0 <= c <= n and 1 <= k <= n");
  }
  if (n - c < k) return 1.0;
  if (n <= 60) {
    // Exact binomials; C(60, 30) still fits in 128 bits.
    auto binom = [](int a, int b) {
      unsigned __int128 r = 1;
      for (int i = 1; i <= b; ++i) r = r * static_cast<unsigned>(a - b + i) / static_cast<unsigned>(i);
      return r;
    };
    return 1.0 - static_cast<double>(binom(n - c, k)) / static_cast<double>(binom(n, k));
  }
  double prod = 1.0;
  for (int i = n - c + 1; i <= n; ++i) prod *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - prod;
}

// -- code extraction ------------------------------------------------------------------

namespace {

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out = split(text, '\n');
  for (auto &l : out) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  return out;
}

bool defines_function(std::string_view source) {
  try {
    auto m = py::parse_module(source);
    return std::any_of(m->body.begin(), m->body.end(),
                       [](const py::StmtPtr &s) { return s->kind == py::Stmt::Kind::FunctionDef; });
  } catch (const py::ParseError &) {
    return false;
  }
}

bool starts_code(const std::string &line) {
  return line.rfind("def ", 0) == 0 || line.rfind("import ", 0) == 0 || line.rfind("from ", 0) == 0;
}

}  // namespace

std::optional<std::string> extract_code(std::string_view completion) {
  auto lines = lines_of(completion);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).rfind("```", 0) != 0) continue;
    std::string body;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      if (trim(lines[j]).rfind("```", 0) == 0) break;
      body += lines[j];
      body += '\n';
    }
    if (trim(body).empty()) return std::nullopt;
    return body;
  }
  if (defines_function(completion)) return std::string(completion);

  std::string best;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!starts_code(lines[i])) continue;
    std::size_t j = i + 1;
    while (j < lines.size()) {
      const auto &l = lines[j];
      bool structural = trim(l).empty() || l[0] == ' ' || l[0] == '\t' || starts_code(l);
      if (!structural) break;
      ++j;
    }
    std::string region;
    for (std::size_t k = i; k < j; ++k) {
      region += lines[k];
      region += '\n';
    }
    if (region.size() > best.size() && defines_function(region)) best = region;
    i = j - 1;
  }
  if (best.empty()) return std::nullopt;
  return best;
}

// -- client --------------------------------------------------------------------------

std::string_view to_string(QueryResult::Status s) {
  switch (s) {
    case QueryResult::Status::Ok: return "ok";
    case QueryResult::Status::TransportError: return "transport_error";
    case QueryResult::Status::RateLimited: return "rate_limited";
    case QueryResult::Status::AuthError: return "auth_error";
    case QueryResult::Status::BadResponse: return "bad_response";
  }
  return "transport_error";
}

ChatClient::ChatClient(ModelConfig cfg, std::shared_ptr<ModelTransport> transport, Sleeper sleeper)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleep_(std::move(sleeper)) {
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string ChatClient::request_body(const std::string &prompt) const {
  Json body = {{"model", cfg_.model},
               {"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})},
               {"temperature", cfg_.temperature},
               {"max_tokens", cfg_.max_tokens}};
  return body.dump();
}

QueryResult ChatClient::query(const std::string &prompt) {
  QueryResult res;
  const std::string body = request_body(prompt);
  auto backoff = cfg_.retry.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    auto start = std::chrono::steady_clock::now();
    HttpReply reply = transport_->post(body);
    AttemptLog log{reply.status,
                   std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count(),
                   reply.error};
    res.attempts.push_back(log);
    if (reply.status == 200) {
      try {
        Json j = Json::parse(reply.body);
        const auto &content = j.at("choices").at(0).at("message").at("content");
        res.completion = content.is_string() ? content.get<std::string>() : std::string();
        res.status = QueryResult::Status::Ok;
      } catch (const std::exception &e) {
        res.status = QueryResult::Status::BadResponse;
        res.error = std::string("unparsable completion: ") + e.what();
      }
      return res;
    }
    if (reply.status == 401 || reply.status == 403) {
      res.status = QueryResult::Status::AuthError;
      res.error = "HTTP " + std::to_string(reply.status);
      return res;
    }
    bool transient = reply.status == 0 || reply.status == 429 || reply.status >= 500;
    if (!transient) {
      res.status = QueryResult::Status::BadResponse;
      res.error = "HTTP " + std::to_string(reply.status);
      return res;
    }
    if (attempt >= cfg_.retry.max_retries) {
      res.status = reply.status == 429 ? QueryResult::Status::RateLimited : QueryResult::Status::TransportError;
      res.error = reply.status == 0 ? reply.error : "HTTP " + std::to_string(reply.status);
      return res;
    }
    auto wait = backoff;
    if (reply.retry_after_s) {
      wait = std::min(cfg_.retry.max_backoff,
                      std::chrono::milliseconds(static_cast<std::int64_t>(*reply.retry_after_s * 1000.0)));
    }
    sleep_(wait);
    ++res.retries;
    backoff = std::min(cfg_.retry.max_backoff,
                       std::chrono::milliseconds(static_cast<std::int64_t>(backoff.count() * cfg_.retry.multiplier)));
  }
}

std::string completion_body(const std::string &text) {
  Json j = {{"object", "chat.completion"},
            {"choices", Json::array({Json{{"index", 0},
                                          {"message", {{"role", "assistant"}, {"content", text}}},
                                          {"finish_reason", "stop"}}})}};
  return j.dump();
}

std::string prompt_of_request(const std::string &body) {
  Json j = Json::parse(body);
  const auto &msgs = j.at("messages");
  for (auto it = msgs.rbegin(); it != msgs.rend(); ++it) {
    if ((*it).value("role", "") == "user") return (*it).at("content").get<std::string>();
  }
  throw std::invalid_argument("request has no user message");
}

HttpReply MockModelTransport::post(const std::string &body) {
  ++calls_;
  HttpReply r;
  try {
    r.body = completion_body(responder_(prompt_of_request(body)));
    r.status = 200;
  } catch (const std::exception &e) {
    r.status = 400;
    r.body = e.what();
  }
  return r;
}

std::string syntax_mutant(const std::string &source) {
  auto pos = source.find("def main(");
  if (pos == std::string::npos) return source + "\ndef main(\n";
  auto colon = source.find("):", pos);
  std::string out = source;
  if (colon != std::string::npos) out.erase(colon + 1, 1);
  return out;
}

std::string wrong_constant_mutant(const std::string &source) {
  auto pos = source.find("def main(");
  if (pos == std::string::npos) return source;
  auto ret = source.find("\n    return ", pos);
  if (ret == std::string::npos) return source;
  auto eol = source.find('\n', ret + 1);
  std::string out = source.substr(0, ret) + "\n    return '__wrong_constant__'";
  if (eol != std::string::npos) out += source.substr(eol);
  return out;
}

MockModelTransport::Responder reference_responder(const std::vector<NestedProblem> &bench, MockBehavior behavior) {
  auto by_prompt = std::make_shared<std::map<std::string, std::string>>();
  for (const auto &np : bench) {
    if (!np.rendered_prompt.empty()) (*by_prompt)[np.rendered_prompt] = np.reference_source;
  }
  return [by_prompt, behavior](const std::string &prompt) -> std::string {
    auto it = by_prompt->find(prompt);
    if (it == by_prompt->end()) return "I am not sure how to write these functions.";
    std::string code = it->second;
    if (behavior == MockBehavior::SyntaxError) code = syntax_mutant(code);
    if (behavior == MockBehavior::WrongConstant) code = wrong_constant_mutant(code);
    return "Here is the implementation.\n\n```python\n" + code + "```\n";
  };
}

MockModelTransport::Responder coin_responder(const std::vector<NestedProblem> &bench,
                                             std::map<int, double> solve_rate_by_unit, std::uint64_t salt) {
  struct Entry {
    std::string id;
    std::string source;
    int unit;
  };
  auto by_prompt = std::make_shared<std::map<std::string, Entry>>();
  for (const auto &np : bench) {
    if (!np.rendered_prompt.empty()) (*by_prompt)[np.rendered_prompt] = {np.id, np.reference_source, np.unit.index};
  }
  auto rates = std::make_shared<std::map<int, double>>(std::move(solve_rate_by_unit));
  return [by_prompt, rates, salt](const std::string &prompt) -> std::string {
    auto it = by_prompt->find(prompt);
    if (it == by_prompt->end()) return "No idea.";
    const Entry &e = it->second;
    auto rate = rates->count(e.unit) ? rates->at(e.unit) : 0.0;
    Rng coin(hash_combine(stable_hash(e.id), salt));
    bool solve = coin.unit() < rate;
    return "```python\n" + (solve ? e.source : wrong_constant_mutant(e.source)) + "```\n";
  };
}

// -- grading ------------------------------------------------------------------------

Json eval_result_to_json(const EvalResult &r) {
  Json j;
  j["problem_id"] = r.problem_id;
  j["sample"] = r.sample;
  j["unit"] = r.unit.index;
  j["graph"] = r.graph_id;
  j["level"] = r.level.index;
  j["master_seed"] = r.master_seed;
  j["evaluated"] = r.evaluated;
  j["transport_status"] = r.transport_status;
  j["retries"] = r.retries;
  j["solved"] = r.solved;
  j["first_error"] = r.first_error;
  j["ability"] = r.ability ? Json(std::string(to_string(*r.ability))) : Json(nullptr);
  Json outs = Json::array();
  for (const auto &o : r.outcomes) {
    std::string kind = o.kind == CaseOutcome::Kind::Pass ? "pass" : o.kind == CaseOutcome::Kind::Fail ? "fail" : "timeout";
    Json oj = {{"outcome", kind}};
    if (!o.exception_type.empty()) oj["exception_type"] = o.exception_type;
    outs.push_back(oj);
  }
  j["outcomes"] = outs;
  j["completion"] = r.completion;
  j["extracted"] = r.extracted ? Json(*r.extracted) : Json(nullptr);
  return j;
}

EvalResult eval_result_from_json(const Json &j) {
  try {
    EvalResult r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.sample = j.at("sample").get<int>();
    r.unit = UnitId{j.at("unit").get<int>()};
    r.graph_id = j.at("graph").get<std::string>();
    r.level = LevelId{j.at("level").get<int>()};
    r.master_seed = j.at("master_seed").get<std::uint64_t>();
    r.evaluated = j.at("evaluated").get<bool>();
    r.transport_status = j.value("transport_status", "");
    r.retries = j.value("retries", 0);
    r.solved = j.at("solved").get<bool>();
    r.first_error = j.value("first_error", "");
    if (j.contains("ability") && j["ability"].is_string()) {
      r.ability = parse_ability(j["ability"].get<std::string>());
      if (!r.ability) throw std::invalid_argument("unknown ability " + j["ability"].dump());
    }
    for (const auto &o : j.at("outcomes")) {
      CaseOutcome c;
      auto kind = o.at("outcome").get<std::string>();
      c.kind = kind == "pass" ? CaseOutcome::Kind::Pass : kind == "fail" ? CaseOutcome::Kind::Fail : CaseOutcome::Kind::Timeout;
      c.exception_type = o.value("exception_type", "");
      r.outcomes.push_back(c);
    }
    r.completion = j.value("completion", "");
    if (j.contains("extracted") && j["extracted"].is_string()) r.extracted = j["extracted"].get<std::string>();
    return r;
  } catch (const nlohmann::json::exception &e) {
    throw std::invalid_argument(std::string("bad eval record: ") + e.what());
  }
}

EvalResult grade(const std::optional<std::string> &source, const NestedProblem &np, ExecutionService &sandbox,
                 double timeout_s, double tolerance) {
  EvalResult r;
  r.problem_id = np.id;
  r.unit = np.unit;
  r.graph_id = np.graph_id;
  r.level = np.level;
  r.master_seed = np.master_seed;
  r.extracted = source;
  if (!source) {
    for (std::size_t i = 0; i < std::max<std::size_t>(1, np.testcases.size()); ++i) {
      r.outcomes.push_back({CaseOutcome::Kind::Fail, "SyntaxError"});
    }
  } else {
    std::vector<ExecRequest> reqs;
    for (std::size_t i = 0; i < np.testcases.size(); ++i) {
      ExecRequest req;
      req.id = np.id + "#grade" + std::to_string(i);
      req.source = *source;
      req.entry_point = "main";
      req.call_args = np.testcases[i].root_input;
      req.timeout_s = timeout_s;
      reqs.push_back(std::move(req));
    }
    auto resps = sandbox.run_batch(reqs);
    for (std::size_t i = 0; i < resps.size(); ++i) {
      const auto &resp = resps[i];
      CaseOutcome o;
      switch (resp.status) {
        case ExecResponse::Status::Ok: {
          bool equal = false;
          try {
            equal = approx_equal(parse_literal(resp.value_repr), parse_literal(np.testcases[i].expected_repr), tolerance);
          } catch (const LiteralError &) {
            equal = false;
          }
          if (!equal) o = {CaseOutcome::Kind::Fail, kWrongValueClass};
          break;
        }
        case ExecResponse::Status::Exception:
        case ExecResponse::Status::CompileError: o = {CaseOutcome::Kind::Fail, resp.exception_type}; break;
        case ExecResponse::Status::Timeout: o = {CaseOutcome::Kind::Timeout, kTimeoutClass}; break;
        case ExecResponse::Status::MalformedRequest:
          throw SandboxUnavailable("sandbox rejected grading request: " + resp.message);
      }
      r.outcomes.push_back(o);
    }
  }
  r.solved = !r.outcomes.empty() &&
             std::all_of(r.outcomes.begin(), r.outcomes.end(), [](const CaseOutcome &o) { return o.kind == CaseOutcome::Kind::Pass; });
  if (!r.solved) {
    for (const auto &o : r.outcomes) {
      if (o.kind != CaseOutcome::Kind::Pass) {
        r.first_error = o.exception_type;
        break;
      }
    }
    r.ability = classify_error(r.first_error);
  }
  return r;
}

std::vector<EvalResult> run_eval(const std::vector<NestedProblem> &bench, ChatClient &client, ExecutionService &sandbox,
                                 const EvalOptions &opts) {
  std::vector<const NestedProblem *> valid;
  for (const auto &np : bench) {
    if (np.verdict.status == GenerationVerdict::Status::Valid) valid.push_back(&np);
  }
  const auto samples = static_cast<std::size_t>(std::max(1, opts.samples));
  std::vector<EvalResult> results(valid.size() * samples);
  parallel_for(results.size(), opts.concurrency, [&](std::size_t job) {
    const NestedProblem &np = *valid[job / samples];
    const int sample = static_cast<int>(job % samples);
    QueryResult q = client.query(np.rendered_prompt);
    EvalResult r;
    if (!q.ok()) {
      r.problem_id = np.id;
      r.unit = np.unit;
      r.graph_id = np.graph_id;
      r.level = np.level;
      r.master_seed = np.master_seed;
      r.evaluated = false;
    } else {
      r = grade(extract_code(q.completion), np, sandbox, opts.timeout_s);
      r.completion = q.completion;
    }
    r.sample = sample;
    r.transport_status = std::string(to_string(q.status));
    r.retries = q.retries;
    results[job] = std::move(r);
  });
  return results;
}

}  // namespace callforge
