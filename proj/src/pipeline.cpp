#include "callforge/pipeline.hpp"

#include <charconv>
#include <set>

#include "callforge/cfg.hpp"
#include "callforge/graph_catalog.hpp"
#include "callforge/oracle.hpp"
#include "callforge/problem_bank.hpp"

namespace callforge {

namespace fs = std::filesystem;

namespace {

template <typename T>
T parse_integer(const std::string &key, std::string_view text) {
  std::string t = trim(text);
  T v{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(key, "expected an integer, got '" + t + "'");
  }
  return v;
}

double parse_double(const std::string &key, const std::string &text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception &) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
}

bool parse_bool(const std::string &key, const std::string &text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

std::vector<std::string> parse_list(const std::string &text) {
  std::vector<std::string> out;
  for (const auto &part : split(text, ',')) {
    auto t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace

void apply_setting(RunConfig &cfg, const std::string &key, const std::string &raw) {
  const std::string value = trim(raw);
  if (key == "bank") {
    cfg.bank = value;
  } else if (key == "alphas") {
    try {
      UnitThresholds::parse(value);
    } catch (const std::exception &e) {
      throw ConfigError(key, e.what());
    }
    cfg.alphas = value;
  } else if (key == "betas") {
    try {
      LevelThresholds::parse(value);
    } catch (const std::exception &e) {
      throw ConfigError(key, e.what());
    }
    cfg.betas = value;
  } else if (key == "count") {
    cfg.count = parse_integer<std::uint64_t>(key, value);
  } else if (key == "seeds" || key == "seed") {
    cfg.seeds.clear();
    for (const auto &s : parse_list(value)) cfg.seeds.push_back(parse_integer<std::uint64_t>(key, s));
  } else if (key == "units") {
    cfg.units.clear();
    for (auto s : parse_list(value)) {
      if (!s.empty() && (s[0] == 'U' || s[0] == 'u')) s.erase(0, 1);
      cfg.units.push_back(parse_integer<int>(key, s));
    }
  } else if (key == "graphs") {
    cfg.graphs = parse_list(value);
  } else if (key == "out") {
    cfg.out = value;
  } else if (key == "model") {
    cfg.model = value;
    cfg.model_cfg.model = value;
  } else if (key == "endpoint") {
    cfg.model_cfg.endpoint = value;
  } else if (key == "temperature") {
    cfg.model_cfg.temperature = parse_double(key, value);
  } else if (key == "max_tokens") {
    cfg.model_cfg.max_tokens = parse_integer<int>(key, value);
  } else if (key == "request_timeout") {
    cfg.model_cfg.request_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(parse_double(key, value) * 1000));
  } else if (key == "max_retries") {
    cfg.model_cfg.retry.max_retries = parse_integer<int>(key, value);
  } else if (key == "concurrency") {
    cfg.model_cfg.concurrency = parse_integer<std::size_t>(key, value);
  } else if (key == "api_key_env") {
    cfg.model_cfg.api_key_env = value;
  } else if (key == "samples") {
    cfg.samples = parse_integer<int>(key, value);
  } else if (key == "k") {
    cfg.k = parse_integer<int>(key, value);
  } else if (key == "timeout") {
    cfg.timeout_s = parse_double(key, value);
  } else if (key == "sandbox") {
    cfg.sandbox = value;
  } else if (key == "worker_command") {
    cfg.worker_command = value;
  } else if (key == "workers") {
    cfg.workers = parse_integer<std::size_t>(key, value);
  } else if (key == "resume") {
    cfg.resume = parse_bool(key, value);
  } else {
    throw ConfigError(key, "unknown setting");
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  int lineno = 0;
  for (const auto &line : split(text, '\n')) {
    ++lineno;
    std::string l = line;
    if (auto hash = l.find('#'); hash != std::string::npos) l.erase(hash);
    l = trim(l);
    if (l.empty()) continue;
    auto eq = l.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    }
    apply_setting(cfg, trim(l.substr(0, eq)), l.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_config(const fs::path &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError &e) {
    throw ConfigError("config", e.what());
  }
  return parse_config(text);
}

void validate_config(const RunConfig &cfg) {
  if (cfg.bank.empty()) throw ConfigError("bank", "no bank path given");
  if (!fs::is_regular_file(cfg.bank)) throw ConfigError("bank", "no such file '" + cfg.bank.string() + "'");
  if (cfg.count == 0) throw ConfigError("count", "must be positive");
  if (cfg.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size()) {
    throw ConfigError("seeds", "seeds must be distinct");
  }
  const int n_units = UnitThresholds::parse(cfg.alphas).n_units();
  for (int u : cfg.units) {
    if (u < 1 || u > n_units) throw ConfigError("units", "unit " + std::to_string(u) + " out of range");
  }
  for (const auto &g : cfg.graphs) {
    if (find_graph(g) == nullptr) throw ConfigError("graphs", "unknown graph '" + g + "'");
  }
  if (cfg.samples < 1) throw ConfigError("samples", "must be at least 1");
  if (cfg.k < 1 || cfg.k > cfg.samples) throw ConfigError("k", "must lie in [1, samples]");
  if (cfg.timeout_s <= 0) throw ConfigError("timeout", "must be positive");
  if (cfg.sandbox != "builtin" && cfg.sandbox != "worker") {
    throw ConfigError("sandbox", "expected builtin or worker, got '" + cfg.sandbox + "'");
  }
  if (cfg.sandbox == "worker" && trim(cfg.worker_command).empty()) {
    throw ConfigError("worker_command", "required when sandbox = worker");
  }
  if (cfg.workers == 0) throw ConfigError("workers", "must be positive");
  if (cfg.model_cfg.concurrency == 0) throw ConfigError("concurrency", "must be positive");
}

Json config_to_json(const RunConfig &cfg) {
  Json j;
  j["bank"] = cfg.bank.string();
  j["alphas"] = cfg.alphas;
  j["betas"] = cfg.betas;
  j["count"] = cfg.count;
  j["seeds"] = cfg.seeds;
  j["units"] = cfg.units;
  j["graphs"] = cfg.graphs;
  j["model"] = cfg.model;
  if (!cfg.model.empty() && !is_mock_model(cfg.model)) {
    j["endpoint"] = cfg.model_cfg.endpoint;
    j["temperature"] = cfg.model_cfg.temperature;
    j["max_tokens"] = cfg.model_cfg.max_tokens;
  }
  j["samples"] = cfg.samples;
  j["k"] = cfg.k;
  j["timeout"] = cfg.timeout_s;
  return j;
}

std::string config_hash(const RunConfig &cfg) {
  Json j = config_to_json(cfg);
  // The bank enters through its content so a moved file keeps its hash.
  j.erase("bank");
  std::string bank_text;
  try {
    bank_text = read_file(cfg.bank);
  } catch (const IoError &) {
  }
  return hex64(hash_combine(stable_hash(j.dump()), stable_hash(bank_text)));
}

std::unique_ptr<ExecutionService> make_sandbox(const RunConfig &cfg) {
  if (cfg.sandbox == "worker") {
    WorkerPoolOptions opts;
    for (const auto &arg : split(cfg.worker_command, ' ')) {
      if (!arg.empty()) opts.command.push_back(arg);
    }
    opts.workers = cfg.workers;
    return std::make_unique<WorkerPoolSandbox>(std::move(opts));
  }
  return std::make_unique<BuiltinSandbox>(cfg.workers);
}

bool is_mock_model(std::string_view name) { return name.rfind("mock-", 0) == 0; }

std::shared_ptr<ModelTransport> make_transport(const RunConfig &cfg, const std::vector<NestedProblem> &bench) {
  if (cfg.model == "mock-reference") {
    return std::make_shared<MockModelTransport>(reference_responder(bench, MockBehavior::Reference));
  }
  if (cfg.model == "mock-syntax") {
    return std::make_shared<MockModelTransport>(reference_responder(bench, MockBehavior::SyntaxError));
  }
  if (cfg.model == "mock-wrong") {
    return std::make_shared<MockModelTransport>(reference_responder(bench, MockBehavior::WrongConstant));
  }
  if (cfg.model == "mock-prose") {
    return std::make_shared<MockModelTransport>([](const std::string &) { return std::string("I cannot help with that."); });
  }
  if (is_mock_model(cfg.model)) throw ConfigError("model", "unknown mock model '" + cfg.model + "'");
  return make_http_transport(cfg.model_cfg);
}

std::vector<NestedProblem> load_benchmark(const fs::path &path) {
  std::vector<NestedProblem> out;
  for (const auto &line : read_jsonl(path)) {
    if (!line.error.empty()) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(line.line) + ": " + line.error);
    }
    out.push_back(nested_from_json(line.value));
  }
  return out;
}

void save_benchmark(const fs::path &path, const std::vector<NestedProblem> &bench) {
  std::vector<Json> records;
  records.reserve(bench.size());
  for (const auto &np : bench) records.push_back(nested_to_json(np));
  write_jsonl(path, records);
}

std::vector<EvalResult> load_results(const fs::path &path) {
  std::vector<EvalResult> out;
  for (const auto &line : read_jsonl(path)) {
    if (!line.error.empty()) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(line.line) + ": " + line.error);
    }
    out.push_back(eval_result_from_json(line.value));
  }
  return out;
}

void save_results(const fs::path &path, const std::vector<EvalResult> &results) {
  std::vector<Json> records;
  records.reserve(results.size());
  for (const auto &r : results) records.push_back(eval_result_to_json(r));
  write_jsonl(path, records);
}

// -- orchestration --------------------------------------------------------------------

namespace {

class Checkpoint {
 public:
  Checkpoint(fs::path path, const RunConfig &cfg, std::string hash) : path_(std::move(path)), hash_(std::move(hash)) {
    manifest_["config"] = config_to_json(cfg);
    manifest_["config_hash"] = hash_;
    manifest_["seeds"] = cfg.seeds;
    manifest_["stages"] = Json::array();
    if (cfg.resume && fs::exists(path_)) {
      try {
        Json old = Json::parse(read_file(path_));
        if (old.value("config_hash", "") == hash_) {
          // Only a prefix of completed stages is trusted.
          Json kept = Json::array();
          for (const auto &s : old.at("stages")) {
            if (s.value("status", "") != "done") break;
            done_.insert(s.at("name").get<std::string>());
            kept.push_back(s);
          }
          manifest_["stages"] = kept;
        }
      } catch (const std::exception &) {
        done_.clear();
      }
    }
  }

  [[nodiscard]] bool completed(const std::string &stage, const std::vector<fs::path> &outputs) const {
    if (!done_.count(stage)) return false;
    for (const auto &p : outputs) {
      if (!fs::exists(p)) return false;
    }
    return true;
  }

  void mark(const std::string &stage, const std::string &status, const std::vector<fs::path> &outputs,
            const std::string &error = {}) {
    Json &stages = manifest_["stages"];
    Json kept = Json::array();
    for (const auto &s : stages) {
      if (s.at("name") != stage) kept.push_back(s);
    }
    Json entry = {{"name", stage}, {"status", status}};
    Json outs = Json::array();
    for (const auto &p : outputs) outs.push_back(p.filename().string());
    entry["outputs"] = outs;
    if (!error.empty()) entry["error"] = error;
    kept.push_back(entry);
    stages = kept;
    if (status == "failed") {
      manifest_["failed_stage"] = stage;
    } else {
      manifest_.erase("failed_stage");
    }
    write_file(path_, manifest_.dump(2) + "\n");
  }

 private:
  fs::path path_;
  std::string hash_;
  Json manifest_;
  std::set<std::string> done_;
};

}  // namespace

PipelineArtifacts run_pipeline(const RunConfig &cfg, const PipelineServices &services) {
  validate_config(cfg);
  const std::string hash = config_hash(cfg);
  const UnitThresholds alphas = UnitThresholds::parse(cfg.alphas);
  const LevelThresholds betas = LevelThresholds::parse(cfg.betas);

  PipelineArtifacts art;
  try {
    fs::create_directories(cfg.out);
  } catch (const fs::filesystem_error &e) {
    throw ConfigError("out", e.what());
  }
  art.bank = cfg.out / "bank.jsonl";
  art.rejections = cfg.out / "rejections.jsonl";
  art.classified = cfg.out / "classified.jsonl";
  art.drafts = cfg.out / "drafts.jsonl";
  art.benchmark = cfg.out / "benchmark.jsonl";
  art.results = cfg.out / "results.jsonl";
  art.report = cfg.out / "report.md";
  art.manifest = cfg.out / "manifest.json";

  Checkpoint ckpt(art.manifest, cfg, hash);
  std::unique_ptr<ExecutionService> own_sandbox;
  auto sandbox = [&]() -> ExecutionService & {
    if (services.sandbox != nullptr) return *services.sandbox;
    if (!own_sandbox) own_sandbox = make_sandbox(cfg);
    return *own_sandbox;
  };

  auto stage = [&](const std::string &name, const std::vector<fs::path> &outputs, const std::function<void()> &compute,
                   const std::function<void()> &restore) {
    if (art.stages_run.empty() && ckpt.completed(name, outputs)) {
      try {
        restore();
        art.stages_skipped.push_back(name);
        return;
      } catch (const std::exception &) {
        // Unreadable checkpoint output: recompute.
      }
    }
    try {
      compute();
    } catch (const std::exception &e) {
      ckpt.mark(name, "failed", outputs, e.what());
      throw PipelineError(name, e.what());
    }
    ckpt.mark(name, "done", outputs);
    art.stages_run.push_back(name);
  };

  ProblemBank bank;
  auto reload_bank = [&](const fs::path &p) {
    auto res = ingest_bank(p);
    if (!res.rejections.empty()) throw std::runtime_error("checkpoint bank has rejected records");
    bank = std::move(res.bank);
  };

  stage(
      "ingest", {art.bank, art.rejections},
      [&] {
        auto res = ingest_bank(cfg.bank);
        std::vector<Json> rej;
        for (const auto &r : res.rejections) rej.push_back(rejection_to_json(r));
        write_jsonl(art.rejections, rej);
        if (res.bank.problems.empty()) throw BankError("no valid problems in " + cfg.bank.string());
        bank = std::move(res.bank);
        write_bank(art.bank, bank);
      },
      [&] { reload_bank(art.bank); });

  stage(
      "classify", {art.classified},
      [&] {
        infer_signatures(bank, sandbox(), cfg.timeout_s);
        classify_bank(bank, alphas);
        write_bank(art.classified, bank);
      },
      [&] { reload_bank(art.classified); });

  std::vector<NestedProblem> bench;
  stage(
      "gen", {art.drafts},
      [&] {
        bench.clear();
        for (auto seed : cfg.seeds) {
          GenerationRequest req;
          for (int u : cfg.units) req.units.push_back(UnitId{u});
          req.graph_ids = cfg.graphs;
          req.count = cfg.count;
          req.master_seed = seed;
          req.alphas = alphas;
          req.betas = betas;
          req.workers = cfg.workers;
          auto drafts = generate_drafts(bank, req);
          for (auto &d : drafts) bench.push_back(std::move(d));
        }
        save_benchmark(art.drafts, bench);
      },
      [&] { bench = load_benchmark(art.drafts); });

  stage(
      "oracle", {art.benchmark},
      [&] {
        OracleOptions opts;
        opts.timeout_s = cfg.timeout_s;
        run_oracle(bench, bank, sandbox(), opts);
        save_benchmark(art.benchmark, bench);
      },
      [&] { bench = load_benchmark(art.benchmark); });

  std::vector<EvalResult> results;
  const bool evaluate = !cfg.model.empty();
  if (evaluate) {
    stage(
        "eval", {art.results},
        [&] {
          auto transport = services.transport ? services.transport(bench) : make_transport(cfg, bench);
          ChatClient client(cfg.model_cfg, transport, services.sleeper);
          EvalOptions opts;
          opts.samples = cfg.samples;
          opts.timeout_s = cfg.timeout_s;
          opts.concurrency = cfg.model_cfg.concurrency;
          results = run_eval(bench, client, sandbox(), opts);
          save_results(art.results, results);
        },
        [&] { results = load_results(art.results); });
  }

  stage(
      "report", {art.report},
      [&] {
        SummaryInput in;
        in.results = results;
        in.bench = bench;
        in.seeds = cfg.seeds;
        in.config_hash = hash;
        in.n_units = alphas.n_units();
        in.n_levels = betas.n_levels();
        in.k = cfg.k;
        std::vector<CallGraph> graphs;
        for (const auto &g : catalog()) {
          if (cfg.graphs.empty() || std::find(cfg.graphs.begin(), cfg.graphs.end(), g.id) != cfg.graphs.end()) {
            graphs.push_back(g);
          }
        }
        in.sizes = count_benchmark_space(bank, graphs, alphas.n_units());
        write_file(art.report, render_report(summarize(in)));
      },
      [] {});
  return art;
}

}  // namespace callforge
