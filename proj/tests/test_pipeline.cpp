#include <doctest.h>

#include <set>

#include "callforge/pipeline.hpp"
#include "support.hpp"

using namespace callforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  auto p = fs::temp_directory_path() / ("callforge_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig fixture_config(const fs::path &out) {
  RunConfig cfg = parse_config(
      "# small offline run\n"
      "count = 2\n"
      "seeds = 1, 2\n"
      "graphs = G1, G2, G9\n"
      "timeout = 5\n");
  cfg.bank = callforge::testing::data_path("seed_bank.jsonl");
  cfg.out = out;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing") {
  auto cfg = parse_config("bank = some/file.jsonl  # trailing comment\n\nalphas=1,3,6\nunits = U1, 2\nresume = yes\n");
  CHECK(cfg.bank == fs::path("some/file.jsonl"));
  CHECK(cfg.alphas == "1,3,6");
  CHECK(cfg.units == std::vector<int>{1, 2});
  CHECK(cfg.resume);
  CHECK(cfg.count == 100);
  auto field_of = [](const std::string &text) {
    try {
      parse_config(text);
    } catch (const ConfigError &e) {
      return e.field();
    }
    return std::string("none");
  };
  CHECK(field_of("colour = red\n") == "colour");
  CHECK(field_of("count = many\n") == "count");
  CHECK(field_of("betas = 3,2\n") == "betas");
  CHECK(field_of("just text\n") == "line 1");
  CHECK(field_of("temperature = 0.5\n") == "none");
}

TEST_CASE("missing bank is a config error naming the field") {
  RunConfig cfg;
  cfg.out = scratch("nobank");
  try {
    run_pipeline(cfg);
    FAIL("expected a config error");
  } catch (const ConfigError &e) {
    CHECK(e.field() == "bank");
  }
  cfg.bank = "/nonexistent/bank.jsonl";
  CHECK_THROWS_AS(run_pipeline(cfg), ConfigError);
  cfg.bank = callforge::testing::data_path("seed_bank.jsonl");
  cfg.sandbox = "docker";
  try {
    validate_config(cfg);
    FAIL("expected a config error");
  } catch (const ConfigError &e) {
    CHECK(e.field() == "sandbox");
  }
}

TEST_CASE("generation-only run writes every populated cell") {
  auto out = scratch("genonly");
  auto cfg = fixture_config(out);
  auto art = run_pipeline(cfg);
  CHECK(art.stages_run == std::vector<std::string>{"ingest", "classify", "gen", "oracle", "report"});
  auto bench = load_benchmark(art.benchmark);
  std::set<std::tuple<std::uint64_t, int, std::string>> cells;
  for (const auto &np : bench) cells.insert({np.master_seed, np.unit.index, np.graph_id});
  auto sizes = count_benchmark_space(callforge::testing::classified_fixture_bank(),
                                     {*find_graph("G1"), *find_graph("G2"), *find_graph("G9")}, 4);
  std::size_t populated = 0;
  for (std::size_t u = 0; u < 4; ++u) {
    for (std::size_t g = 0; g < 3; ++g) {
      if (sizes.counts[u][g] == 0) continue;
      ++populated;
      for (std::uint64_t seed : {1u, 2u}) {
        CHECK(cells.count({seed, static_cast<int>(u + 1), sizes.graph_ids[g]}) == 1);
      }
    }
  }
  CHECK(cells.size() == 2 * populated);
  CHECK(!fs::exists(art.results));
  Json manifest = Json::parse(read_file(art.manifest));
  CHECK(manifest["config_hash"] == config_hash(cfg));
  CHECK(manifest["seeds"] == Json::array({1, 2}));
  CHECK(manifest["stages"].size() == 5);
  fs::remove_all(out);
}

TEST_CASE("mock model run matches the golden report") {
  auto out = scratch("golden");
  auto cfg = fixture_config(out);
  cfg.model = "mock-reference";
  auto art = run_pipeline(cfg);
  auto golden = read_file(callforge::testing::data_path("golden_report.md"));
  CHECK(read_file(art.report) == golden);
  fs::remove_all(out);
}

TEST_CASE("identical configs give byte-identical artifacts") {
  auto a = scratch("det_a"), b = scratch("det_b");
  auto cfg_a = fixture_config(a), cfg_b = fixture_config(b);
  cfg_a.model = cfg_b.model = "mock-wrong";
  cfg_b.workers = 3;
  auto art_a = run_pipeline(cfg_a);
  auto art_b = run_pipeline(cfg_b);
  for (auto member : {&PipelineArtifacts::drafts, &PipelineArtifacts::benchmark, &PipelineArtifacts::results,
                      &PipelineArtifacts::report}) {
    CHECK_MESSAGE(read_file(art_a.*member) == read_file(art_b.*member), (art_a.*member).filename());
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("failed stages are recorded and resumable") {
  auto out = scratch("resume");
  auto cfg = fixture_config(out);
  cfg.model = "mock-nonsense";
  try {
    run_pipeline(cfg);
    FAIL("expected eval to fail");
  } catch (const PipelineError &e) {
    CHECK(e.stage() == "eval");
  }
  Json manifest = Json::parse(read_file(out / "manifest.json"));
  CHECK(manifest["failed_stage"] == "eval");

  // Same settings apart from the model change the hash, so start from a
  // config whose earlier stages are reusable.
  auto base = fixture_config(out);
  base.resume = true;
  auto first = run_pipeline(base);
  CHECK(first.stages_skipped.empty());
  auto second = run_pipeline(base);
  CHECK(second.stages_skipped == std::vector<std::string>{"ingest", "classify", "gen", "oracle", "report"});
  CHECK(second.stages_run.empty());
  fs::remove(out / "benchmark.jsonl");
  auto third = run_pipeline(base);
  CHECK(third.stages_skipped == std::vector<std::string>{"ingest", "classify", "gen"});
  CHECK(third.stages_run == std::vector<std::string>{"oracle", "report"});
  fs::remove_all(out);
}

TEST_CASE("a bank with no valid records halts at ingest") {
  auto out = scratch("emptybank");
  auto bank = out.parent_path() / "callforge_empty_bank.jsonl";
  write_file(bank, "{\"id\": \"x\"}\n");
  auto cfg = fixture_config(out);
  cfg.bank = bank;
  try {
    run_pipeline(cfg);
    FAIL("expected ingest to fail");
  } catch (const PipelineError &e) {
    CHECK(e.stage() == "ingest");
  }
  CHECK(fs::exists(out / "rejections.jsonl"));
  fs::remove_all(out);
  fs::remove(bank);
}
