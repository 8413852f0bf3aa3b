#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "callforge/composer.hpp"
#include "callforge/sandbox.hpp"
#include "callforge/util.hpp"

namespace callforge {

enum class AbilityCategory { ProblemUnderstanding, CodePatternGeneration, ContextManagement, Other };

std::string_view to_string(AbilityCategory c);
std::optional<AbilityCategory> parse_ability(std::string_view s);

/// Total over exception class names; unlisted classes are Other.
AbilityCategory classify_error(std::string_view exception_class);

/// The thirteen exception classes with a stated category.
const std::vector<std::pair<std::string, AbilityCategory>> &error_taxonomy();

/// Unbiased pass@k, 1 - C(n-c, k) / C(n, k). Throws std::invalid_argument
/// unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(int n, int c, int k);

/// First fenced block; else the whole text when it parses; else the longest
/// run of lines that parses and defines a function; else nothing.
std::optional<std::string> extract_code(std::string_view completion);

// -- model transport -------------------------------------------------------------

struct RetryPolicy {
  int max_retries{3};
  std::chrono::milliseconds initial_backoff{500};
  double multiplier{2.0};
  std::chrono::milliseconds max_backoff{8000};
};

struct ModelConfig {
  std::string endpoint{"https://api.openai.com/v1/chat/completions"};
  std::string model;
  double temperature{0.0};
  int max_tokens{2048};
  std::chrono::milliseconds request_timeout{60'000};
  RetryPolicy retry;
  std::size_t concurrency{4};
  std::string api_key_env{"OPENAI_API_KEY"};
};

struct HttpReply {
  int status{0};  // 0 when no HTTP exchange happened
  std::string body;
  std::string error;                   // transport-level failure description
  std::optional<double> retry_after_s;  // from a Retry-After header
};

/// One POST of a JSON body to the chat endpoint.
class ModelTransport {
 public:
  virtual ~ModelTransport() = default;
  virtual HttpReply post(const std::string &body) = 0;
};

/// HTTP(S) transport. The bearer token is read from the environment
/// variable named in the config at construction.
std::unique_ptr<ModelTransport> make_http_transport(const ModelConfig &cfg);

struct AttemptLog {
  int http_status{0};
  double latency_ms{0};
  std::string error;
};

struct QueryResult {
  enum class Status { Ok, TransportError, RateLimited, AuthError, BadResponse };
  Status status{Status::Ok};
  std::string completion;
  std::string error;
  int retries{0};
  std::vector<AttemptLog> attempts;

  [[nodiscard]] bool ok() const { return status == Status::Ok; }
};

std::string_view to_string(QueryResult::Status s);

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Chat-completions client with retry on connection failures, 429 and 5xx.
class ChatClient {
 public:
  ChatClient(ModelConfig cfg, std::shared_ptr<ModelTransport> transport, Sleeper sleeper = {});

  QueryResult query(const std::string &prompt);
  [[nodiscard]] const ModelConfig &config() const { return cfg_; }
  [[nodiscard]] std::string request_body(const std::string &prompt) const;

 private:
  ModelConfig cfg_;
  std::shared_ptr<ModelTransport> transport_;
  Sleeper sleep_;
};

/// Wraps text as a chat-completions response body.
std::string completion_body(const std::string &text);
/// The last user message of a chat-completions request body.
std::string prompt_of_request(const std::string &body);

/// Offline model: answers each prompt through a callback.
class MockModelTransport : public ModelTransport {
 public:
  using Responder = std::function<std::string(const std::string &prompt)>;
  explicit MockModelTransport(Responder responder) : responder_(std::move(responder)) {}
  HttpReply post(const std::string &body) override;
  [[nodiscard]] std::size_t calls() const { return calls_; }

 private:
  Responder responder_;
  std::atomic<std::size_t> calls_{0};
};

enum class MockBehavior { Reference, SyntaxError, WrongConstant };

std::string syntax_mutant(const std::string &source);
std::string wrong_constant_mutant(const std::string &source);

/// Answers every benchmark prompt with its reference program or a mutant,
/// inside a fenced block. Unknown prompts get prose.
MockModelTransport::Responder reference_responder(const std::vector<NestedProblem> &bench, MockBehavior behavior);

/// Solves each problem with a fixed probability drawn per problem from
/// `rates` by unit, deterministically in (problem id, salt).
MockModelTransport::Responder coin_responder(const std::vector<NestedProblem> &bench,
                                             std::map<int, double> solve_rate_by_unit, std::uint64_t salt);

// -- grading ----------------------------------------------------------------------

struct CaseOutcome {
  enum class Kind { Pass, Fail, Timeout };
  Kind kind{Kind::Pass};
  std::string exception_type;  // Fail and Timeout
};

struct EvalResult {
  std::string problem_id;
  int sample{0};
  UnitId unit;
  std::string graph_id;
  LevelId level;
  std::uint64_t master_seed{0};
  bool evaluated{true};  // false when the model could not be queried
  std::string transport_status;
  std::string completion;
  std::optional<std::string> extracted;
  std::vector<CaseOutcome> outcomes;
  bool solved{false};
  std::string first_error;
  std::optional<AbilityCategory> ability;
  int retries{0};
};

Json eval_result_to_json(const EvalResult &r);
EvalResult eval_result_from_json(const Json &j);  // throws std::invalid_argument

constexpr double kGradeTolerance = 1e-6;
/// Class recorded when a surrogate is needed for a wrong value.
inline constexpr const char *kWrongValueClass = "AssertionError";
inline constexpr const char *kTimeoutClass = "TimeoutError";

/// Grades a candidate program (nullopt: nothing extractable) against np's
/// test cases. Throws SandboxUnavailable.
EvalResult grade(const std::optional<std::string> &source, const NestedProblem &np, ExecutionService &sandbox,
                 double timeout_s = 10.0, double tolerance = kGradeTolerance);

struct EvalOptions {
  int samples{1};
  double timeout_s{10.0};
  std::size_t concurrency{4};
};

/// Queries and grades every valid problem `samples` times. Results are
/// ordered by (problem, sample) whatever the completion order.
std::vector<EvalResult> run_eval(const std::vector<NestedProblem> &bench, ChatClient &client,
                                 ExecutionService &sandbox, const EvalOptions &opts);

}  // namespace callforge
