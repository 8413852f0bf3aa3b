#include <CLI11.hpp>

#include <iostream>

#include "callforge/cfg.hpp"
#include "callforge/graph_catalog.hpp"
#include "callforge/oracle.hpp"
#include "callforge/pipeline.hpp"
#include "callforge/problem_bank.hpp"

using namespace callforge;
namespace fs = std::filesystem;

namespace {

// Settings gathered from flags; applied over the config file, if any.
struct Overrides {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> settings;

  void bind(CLI::App *cmd, const std::string &flag, const std::string &key, const std::string &help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string &v) { settings.emplace_back(key, v); }, help);
  }

  void bind_list(CLI::App *cmd, const std::string &flag, const std::string &key, const std::string &help) {
    cmd->add_option_function<std::vector<std::string>>(
           flag,
           [this, key](const std::vector<std::string> &vs) {
             std::string joined;
             for (const auto &v : vs) joined += (joined.empty() ? "" : ",") + v;
             settings.emplace_back(key, joined);
           },
           help)
        ->take_all();
  }

  [[nodiscard]] RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto &[k, v] : settings) apply_setting(cfg, k, v);
    return cfg;
  }
};

void add_common(CLI::App *cmd, Overrides &ov) {
  cmd->add_option("--config", ov.config_path, "key = value settings file")->check(CLI::ExistingFile);
  ov.bind(cmd, "--sandbox", "sandbox", "builtin or worker");
  ov.bind(cmd, "--worker-command", "worker_command", "argv of a protocol worker");
  ov.bind(cmd, "--workers", "workers", "execution pool size");
  ov.bind(cmd, "--timeout", "timeout", "per execution timeout in seconds");
}

ProblemBank load_clean_bank(const fs::path &path) {
  auto res = ingest_bank(path);
  for (const auto &r : res.rejections) {
    std::cerr << path.string() << ":" << r.line << ": " << r.id << ": " << r.reason << "\n";
  }
  return std::move(res.bank);
}

std::vector<CallGraph> selected_graphs(const RunConfig &cfg) {
  std::vector<CallGraph> out;
  for (const auto &g : catalog()) {
    if (cfg.graphs.empty() || std::find(cfg.graphs.begin(), cfg.graphs.end(), g.id) != cfg.graphs.end()) {
      out.push_back(g);
    }
  }
  return out;
}

int cmd_ingest(const fs::path &in, const fs::path &out, const fs::path &rejections) {
  auto res = ingest_bank(in);
  write_bank(out, res.bank);
  std::vector<Json> rej;
  for (const auto &r : res.rejections) rej.push_back(rejection_to_json(r));
  if (!rejections.empty()) write_jsonl(rejections, rej);
  std::cout << "accepted " << res.bank.size() << ", rejected " << res.rejections.size() << "\n";
  for (const auto &r : res.rejections) std::cout << "  line " << r.line << " " << r.id << ": " << r.reason << "\n";
  return 0;
}

int cmd_classify(const RunConfig &cfg, const fs::path &in, const fs::path &out) {
  ProblemBank bank = load_clean_bank(in);
  auto sandbox = make_sandbox(cfg);
  infer_signatures(bank, *sandbox, cfg.timeout_s);
  classify_bank(bank, UnitThresholds::parse(cfg.alphas));
  write_bank(out, bank);
  std::map<int, int> per_unit;
  int ineligible = 0;
  for (const auto &p : bank.problems) {
    if (!p.eligible) {
      ++ineligible;
    } else if (p.unit) {
      ++per_unit[p.unit->index];
    }
  }
  for (const auto &[u, n] : per_unit) std::cout << "U" << u << " " << n << "\n";
  std::cout << "ineligible " << ineligible << "\n";
  return 0;
}

int cmd_graphs(const RunConfig &cfg) {
  const auto betas = LevelThresholds::parse(cfg.betas);
  std::cout << "| Graph | Nodes | Edges | L_max | B | |E| | M | Level |\n|---|---|---|---|---|---|---|---|\n";
  for (const auto &g : catalog()) {
    auto f = graph_features(g);
    std::string edges;
    for (const auto &[a, b] : g.edges) edges += (edges.empty() ? "" : " ") + std::to_string(a) + ">" + std::to_string(b);
    std::cout << "| " << g.id << " | " << g.node_count << " | " << edges << " | " << f.l_max << " | " << f.b << " | "
              << f.e_count << " | " << f.metric << " | L" << classify_level(f.metric, betas).index << " |\n";
  }
  return 0;
}

std::vector<NestedProblem> generate(const RunConfig &cfg, const ProblemBank &bank) {
  std::vector<NestedProblem> bench;
  for (auto seed : cfg.seeds) {
    GenerationRequest req;
    for (int u : cfg.units) req.units.push_back(UnitId{u});
    req.graph_ids = cfg.graphs;
    req.count = cfg.count;
    req.master_seed = seed;
    req.alphas = UnitThresholds::parse(cfg.alphas);
    req.betas = LevelThresholds::parse(cfg.betas);
    req.workers = cfg.workers;
    for (auto &d : generate_drafts(bank, req)) bench.push_back(std::move(d));
  }
  return bench;
}

std::size_t oracle(const RunConfig &cfg, const ProblemBank &bank, std::vector<NestedProblem> &bench) {
  auto sandbox = make_sandbox(cfg);
  OracleOptions opts;
  opts.timeout_s = cfg.timeout_s;
  return run_oracle(bench, bank, *sandbox, opts);
}

int cmd_gen(const RunConfig &cfg, const fs::path &out, bool drafts_only) {
  ProblemBank bank = load_clean_bank(cfg.bank);
  auto bench = generate(cfg, bank);
  std::size_t valid = bench.size();
  if (!drafts_only) valid = oracle(cfg, bank, bench);
  save_benchmark(out, bench);
  std::cout << "generated " << bench.size() << " problems";
  if (!drafts_only) std::cout << ", " << valid << " valid";
  std::cout << "\n";
  return 0;
}

int cmd_oracle(const RunConfig &cfg, const fs::path &in, const fs::path &out) {
  ProblemBank bank = load_clean_bank(cfg.bank);
  auto bench = load_benchmark(in);
  auto valid = oracle(cfg, bank, bench);
  save_benchmark(out, bench);
  std::cout << valid << " of " << bench.size() << " valid\n";
  return 0;
}

int cmd_eval(const RunConfig &cfg, const fs::path &bench_path, const fs::path &out) {
  if (cfg.model.empty()) throw ConfigError("model", "no model given");
  auto bench = load_benchmark(bench_path);
  auto sandbox = make_sandbox(cfg);
  ChatClient client(cfg.model_cfg, make_transport(cfg, bench));
  EvalOptions opts;
  opts.samples = cfg.samples;
  opts.timeout_s = cfg.timeout_s;
  opts.concurrency = cfg.model_cfg.concurrency;
  auto results = run_eval(bench, client, *sandbox, opts);
  save_results(out, results);
  std::size_t solved = 0, unevaluated = 0;
  for (const auto &r : results) {
    solved += r.solved ? 1 : 0;
    unevaluated += r.evaluated ? 0 : 1;
  }
  std::cout << results.size() << " results, " << solved << " solved, " << unevaluated << " unevaluated\n";
  return 0;
}

int cmd_report(const RunConfig &cfg, const std::vector<fs::path> &result_files, const fs::path &bench_path,
               const fs::path &out, const std::string &hash) {
  SummaryInput in;
  for (const auto &f : result_files) {
    for (auto &r : load_results(f)) in.results.push_back(std::move(r));
  }
  if (!bench_path.empty()) in.bench = load_benchmark(bench_path);
  in.config_hash = hash;
  in.n_units = UnitThresholds::parse(cfg.alphas).n_units();
  in.n_levels = LevelThresholds::parse(cfg.betas).n_levels();
  in.k = cfg.k;
  if (!cfg.bank.empty()) in.sizes = count_benchmark_space(load_clean_bank(cfg.bank), selected_graphs(cfg), in.n_units);
  std::string text = render_report(summarize(in));
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return 0;
}

int cmd_count(const RunConfig &cfg) {
  ProblemBank bank = load_clean_bank(cfg.bank);
  std::cout << render_size_table(count_benchmark_space(bank, selected_graphs(cfg), UnitThresholds::parse(cfg.alphas).n_units()));
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Benchmark generator and evaluator for nested code-generation problems"};
  app.require_subcommand(1);
  Overrides ov;

  std::string in_path, out_path, rejections_path, bench_path, hash;
  std::vector<std::string> result_paths;
  bool drafts_only = false;

  auto *ingest = app.add_subcommand("ingest", "validate a seed bank");
  ingest->add_option("--bank", in_path, "line-delimited seed problems")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", out_path, "accepted records")->required();
  ingest->add_option("--rejections", rejections_path, "rejection report");

  auto *classify = app.add_subcommand("classify", "infer signatures and assign units");
  add_common(classify, ov);
  classify->add_option("--bank", in_path, "ingested bank")->required()->check(CLI::ExistingFile);
  classify->add_option("--out", out_path, "classified bank")->required();
  ov.bind(classify, "--alphas", "alphas", "unit cut points, e.g. 1,2,4,7");

  auto *graphs = app.add_subcommand("graphs", "list the call-graph catalog");
  add_common(graphs, ov);
  ov.bind(graphs, "--betas", "betas", "level cut points, e.g. 1,4,9,16");

  auto *gen = app.add_subcommand("gen", "compose nested problems");
  add_common(gen, ov);
  ov.bind(gen, "--bank", "bank", "classified bank");
  ov.bind_list(gen, "--unit", "units", "units to generate (default all)");
  ov.bind_list(gen, "--graph", "graphs", "graphs to generate (default all)");
  ov.bind(gen, "--count", "count", "problems per (unit, graph)");
  ov.bind(gen, "--seed", "seeds", "master seed(s), comma separated");
  ov.bind(gen, "--alphas", "alphas", "unit cut points");
  ov.bind(gen, "--betas", "betas", "level cut points");
  gen->add_flag("--drafts-only", drafts_only, "skip test-case generation");
  gen->add_option("--out", out_path, "benchmark file")->required();

  auto *orc = app.add_subcommand("oracle", "generate test cases and drop bad generations");
  add_common(orc, ov);
  ov.bind(orc, "--bank", "bank", "classified bank");
  orc->add_option("--bench", in_path, "draft benchmark")->required()->check(CLI::ExistingFile);
  orc->add_option("--out", out_path, "benchmark file")->required();

  auto *ev = app.add_subcommand("eval", "query a model and grade its completions");
  add_common(ev, ov);
  ev->add_option("--bench", bench_path, "benchmark file")->required()->check(CLI::ExistingFile);
  ov.bind(ev, "--model", "model", "model name, or mock-reference | mock-syntax | mock-wrong | mock-prose");
  ov.bind(ev, "--endpoint", "endpoint", "chat-completions URL");
  ov.bind(ev, "--samples", "samples", "completions per problem");
  ov.bind(ev, "--k", "k", "k of Pass@k");
  ov.bind(ev, "--concurrency", "concurrency", "parallel model requests");
  ov.bind(ev, "--temperature", "temperature", "sampling temperature");
  ov.bind(ev, "--max-tokens", "max_tokens", "completion budget");
  ev->add_option("--out", out_path, "result records")->required();

  auto *rep = app.add_subcommand("report", "summarize result records");
  add_common(rep, ov);
  rep->add_option("--results", result_paths, "result files")->required()->check(CLI::ExistingFile);
  rep->add_option("--bench", bench_path, "benchmark file for matrix counts")->check(CLI::ExistingFile);
  ov.bind(rep, "--bank", "bank", "classified bank for the size table");
  ov.bind(rep, "--k", "k", "k of Pass@k");
  ov.bind(rep, "--alphas", "alphas", "unit cut points");
  ov.bind(rep, "--betas", "betas", "level cut points");
  rep->add_option("--config-hash", hash, "hash cited in the header");
  rep->add_option("--out", out_path, "report file (default stdout)");

  auto *count = app.add_subcommand("count", "exact size of the benchmark space");
  add_common(count, ov);
  ov.bind(count, "--bank", "bank", "classified bank");
  ov.bind_list(count, "--graph", "graphs", "graphs to count (default all)");
  ov.bind(count, "--alphas", "alphas", "unit cut points");

  auto *run = app.add_subcommand("run", "full pipeline from a config file");
  add_common(run, ov);
  std::vector<std::string> sets;
  run->add_option("--set", sets, "key=value override")->take_all();
  ov.bind(run, "--out", "out", "output directory");
  ov.bind(run, "--model", "model", "model name");
  run->add_flag_function("--resume", [&ov](std::int64_t) { ov.settings.emplace_back("resume", "true"); },
                         "reuse completed stages");

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto &s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set", "expected key=value, got '" + s + "'");
      ov.settings.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    RunConfig cfg = ov.resolve();
    if (ingest->parsed()) return cmd_ingest(in_path, out_path, rejections_path);
    if (classify->parsed()) return cmd_classify(cfg, in_path, out_path);
    if (graphs->parsed()) return cmd_graphs(cfg);
    if (gen->parsed()) {
      validate_config(cfg);
      return cmd_gen(cfg, out_path, drafts_only);
    }
    if (orc->parsed()) {
      validate_config(cfg);
      return cmd_oracle(cfg, in_path, out_path);
    }
    if (ev->parsed()) return cmd_eval(cfg, bench_path, out_path);
    if (rep->parsed()) return cmd_report(cfg, {result_paths.begin(), result_paths.end()}, bench_path, out_path, hash);
    if (count->parsed()) {
      validate_config(cfg);
      return cmd_count(cfg);
    }
    if (run->parsed()) {
      auto art = run_pipeline(cfg);
      for (const auto &s : art.stages_skipped) std::cout << "restored " << s << "\n";
      for (const auto &s : art.stages_run) std::cout << "ran " << s << "\n";
      std::cout << "report: " << art.report.string() << "\n";
      return 0;
    }
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PipelineError &e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
