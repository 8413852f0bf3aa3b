#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "callforge/eval.hpp"
#include "callforge/report.hpp"

namespace callforge {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string &message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  [[nodiscard]] const std::string &field() const { return field_; }

 private:
  std::string field_;
};

class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string &message)
      : std::runtime_error("stage " + stage + " failed: " + message), stage_(std::move(stage)) {}
  [[nodiscard]] const std::string &stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunConfig {
  std::filesystem::path bank;
  std::string alphas{"1,2,4,7"};
  std::string betas{"1,4,9,16"};
  std::uint64_t count{100};
  std::vector<std::uint64_t> seeds{0};
  std::vector<int> units;            // empty: all
  std::vector<std::string> graphs;   // empty: whole catalog
  std::filesystem::path out{"callforge-out"};
  std::string model;                 // empty: skip evaluation; "mock-reference" etc. run offline
  ModelConfig model_cfg;
  int samples{1};
  int k{1};
  double timeout_s{10.0};
  std::string sandbox{"builtin"};    // builtin | worker
  std::string worker_command;
  std::size_t workers{1};
  bool resume{false};
};

/// Sets one field from its key. Throws ConfigError naming the key.
void apply_setting(RunConfig &cfg, const std::string &key, const std::string &value);
/// `key = value` lines; `#` starts a comment.
RunConfig load_config(const std::filesystem::path &path);
RunConfig parse_config(std::string_view text);
/// Checks referenced paths and value ranges. Throws ConfigError.
void validate_config(const RunConfig &cfg);

Json config_to_json(const RunConfig &cfg);
/// Hash over every setting that influences artifact contents.
std::string config_hash(const RunConfig &cfg);

std::unique_ptr<ExecutionService> make_sandbox(const RunConfig &cfg);

/// Mock names: mock-reference, mock-syntax, mock-wrong, mock-prose.
bool is_mock_model(std::string_view name);
std::shared_ptr<ModelTransport> make_transport(const RunConfig &cfg, const std::vector<NestedProblem> &bench);

struct PipelineServices {
  ExecutionService *sandbox{nullptr};  // null: built from the config
  std::function<std::shared_ptr<ModelTransport>(const std::vector<NestedProblem> &)> transport;
  Sleeper sleeper;
};

struct PipelineArtifacts {
  std::filesystem::path bank, rejections, classified, drafts, benchmark, results, report, manifest;
  std::vector<std::string> stages_run;      // executed in this call
  std::vector<std::string> stages_skipped;  // restored from the checkpoint
};

/// ingest, classify, gen, oracle, eval (when a model is set), report. Each
/// stage persists its output and is recorded in manifest.json. With
/// cfg.resume, stages already completed under the same config hash are
/// loaded instead of recomputed. Throws ConfigError or PipelineError.
PipelineArtifacts run_pipeline(const RunConfig &cfg, const PipelineServices &services = {});

/// Line-delimited benchmark and result files.
std::vector<NestedProblem> load_benchmark(const std::filesystem::path &path);
void save_benchmark(const std::filesystem::path &path, const std::vector<NestedProblem> &bench);
std::vector<EvalResult> load_results(const std::filesystem::path &path);
void save_results(const std::filesystem::path &path, const std::vector<EvalResult> &results);

}  // namespace callforge
